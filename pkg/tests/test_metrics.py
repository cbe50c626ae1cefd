from collections import deque

import numpy as np
import pytest

from src.errors import DimensionError
from src.evaluation.metrics import (
    connectivity_error,
    connectivity_levels,
    gaussian_derivative_kernels,
    gradient_error,
    largest_component,
    mse,
    sad,
)


def flood_fill_largest(mask):
    """Largest 4-connected component by BFS in raster order; first found wins ties"""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    best = np.zeros_like(mask, dtype=bool)
    best_size = 0
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or seen[i, j]:
                continue
            component = np.zeros_like(mask, dtype=bool)
            queue = deque([(i, j)])
            seen[i, j] = True
            while queue:
                y, x = queue.popleft()
                component[y, x] = True
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            if component.sum() > best_size:
                best, best_size = component, int(component.sum())
    return best


def reference_connectivity(gt, pred, unknown):
    li = np.zeros(gt.shape)
    for k in range(1, 10):
        level = k / 10
        li[flood_fill_largest((gt >= level) & (pred >= level))] = level
    total = 0.0
    for i in range(gt.shape[0]):
        for j in range(gt.shape[1]):
            if unknown[i, j]:
                d_gt, d_pred = gt[i, j] - li[i, j], pred[i, j] - li[i, j]
                phi_gt = 1 - d_gt if d_gt >= 0.15 else 1.0
                phi_pred = 1 - d_pred if d_pred >= 0.15 else 1.0
                total += abs(phi_gt - phi_pred)
    return total / 1000


def reference_gradient_magnitude(alpha, hx, hy):
    r = hx.shape[0] // 2
    padded = np.pad(alpha, r, mode="symmetric")
    h, w = alpha.shape
    gx, gy = np.zeros((h, w)), np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            for u in range(2 * r + 1):
                for v in range(2 * r + 1):
                    value = padded[i + 2 * r - u, j + 2 * r - v]
                    gx[i, j] += hx[u, v] * value
                    gy[i, j] += hy[u, v] * value
    return np.sqrt(gx ** 2 + gy ** 2)


class TestSadMse:
    def test_identical_mattes(self, rng):
        alpha = rng.random((6, 6))
        unknown = np.ones((6, 6), dtype=bool)
        assert sad(alpha, alpha, unknown) == 0.0
        assert mse(alpha, alpha, unknown) == 0.0

    def test_uniform_error(self):
        unknown = np.ones((40, 25), dtype=bool)
        assert sad(np.zeros((40, 25)), np.full((40, 25), 0.5), unknown) == pytest.approx(0.5)
        assert mse(np.zeros((40, 25)), np.full((40, 25), 0.1), unknown) == pytest.approx(0.01)

    def test_match_reference_loop(self, rng):
        gt, pred = rng.random((16, 16)), rng.random((16, 16))
        unknown = rng.random((16, 16)) < 0.5
        abs_sum = sq_sum = 0.0
        for i in range(16):
            for j in range(16):
                if unknown[i, j]:
                    abs_sum += abs(gt[i, j] - pred[i, j])
                    sq_sum += (gt[i, j] - pred[i, j]) ** 2
        assert sad(gt, pred, unknown) == pytest.approx(abs_sum / 1000)
        assert mse(gt, pred, unknown) == pytest.approx(sq_sum / unknown.sum())

    def test_symmetry_and_scaling(self, rng):
        gt, pred = rng.random((8, 8)), rng.random((8, 8))
        unknown = np.ones((8, 8), dtype=bool)
        assert sad(gt, pred, unknown) == pytest.approx(sad(pred, gt, unknown))
        assert mse(gt, pred, unknown) == pytest.approx(mse(pred, gt, unknown))
        small, large = np.ones((4, 4), dtype=bool), np.ones((4, 8), dtype=bool)
        assert sad(np.zeros((4, 8)), np.full((4, 8), 0.2), large) == pytest.approx(
            2 * sad(np.zeros((4, 4)), np.full((4, 4), 0.2), small)
        )
        assert mse(np.zeros((4, 8)), np.full((4, 8), 0.2), large) == pytest.approx(
            mse(np.zeros((4, 4)), np.full((4, 4), 0.2), small)
        )

    def test_outside_unknown_is_ignored(self, rng):
        gt, pred = rng.random((8, 8)), rng.random((8, 8))
        unknown = rng.random((8, 8)) < 0.5
        changed = pred.copy()
        changed[~unknown] = 1.0 - changed[~unknown]
        assert sad(gt, pred, unknown) == sad(gt, changed, unknown)
        assert mse(gt, pred, unknown) == mse(gt, changed, unknown)

    def test_empty_unknown(self, rng):
        gt = rng.random((3, 3))
        empty = np.zeros((3, 3), dtype=bool)
        assert sad(gt, gt, empty) == 0.0
        assert mse(gt, gt, empty) is None

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sad(np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 2), dtype=bool))


class TestGradientError:
    def test_kernels(self):
        hx, hy = gaussian_derivative_kernels(1.4)
        assert hx.shape == (11, 11)
        assert np.abs(hx).sum() == pytest.approx(1.0)
        np.testing.assert_array_equal(hy, hx.T)
        assert not hx.flags.writeable

    def test_identical_and_constant_mattes(self, rng):
        alpha = rng.random((10, 10))
        unknown = np.ones((10, 10), dtype=bool)
        assert gradient_error(alpha, alpha, unknown) == 0.0
        assert gradient_error(np.full((10, 10), 0.2), np.full((10, 10), 0.9), unknown) == pytest.approx(0.0, abs=1e-12)

    def test_step_edge_matches_direct_convolution(self, rng):
        gt = np.zeros((8, 8))
        gt[:, 4:] = 1.0
        pred = np.clip(gt + rng.normal(scale=0.1, size=(8, 8)), 0.0, 1.0)
        unknown = np.zeros((8, 8), dtype=bool)
        unknown[:, 2:6] = True
        hx, hy = gaussian_derivative_kernels(1.4)
        diff = reference_gradient_magnitude(gt, hx, hy) - reference_gradient_magnitude(pred, hx, hy)
        expected = (diff ** 2)[unknown].sum() / 1000
        assert gradient_error(gt, pred, unknown) == pytest.approx(expected, rel=1e-9)
        assert gradient_error(pred, gt, unknown) == pytest.approx(expected, rel=1e-9)


class TestConnectivityError:
    def test_identical_mattes(self, rng):
        alpha = rng.random((9, 9))
        assert connectivity_error(alpha, alpha, np.ones((9, 9), dtype=bool)) == 0.0

    def test_all_ones(self):
        ones = np.ones((5, 5))
        assert connectivity_error(ones, ones, np.ones((5, 5), dtype=bool)) == 0.0
        np.testing.assert_allclose(connectivity_levels(ones, ones), 0.9)

    def test_levels_exclude_one(self):
        levels = connectivity_levels(np.ones((2, 2)), np.ones((2, 2)), step=0.1)
        assert levels.max() == pytest.approx(0.9)

    def test_isolated_pixel_against_flood_fill(self):
        gt = np.zeros((5, 5))
        gt[1:4, 0:2] = 0.8
        gt[2, 4] = 1.0
        pred = gt.copy()
        pred[1:4, 0:2] = 0.6
        pred[2, 4] = 0.95
        pred[0, 4] = 0.5
        unknown = np.ones((5, 5), dtype=bool)
        assert connectivity_error(gt, pred, unknown) == pytest.approx(reference_connectivity(gt, pred, unknown))
        assert connectivity_error(gt, pred, unknown) > 0.0

    def test_random_cases_against_flood_fill(self, rng):
        for _ in range(50):
            gt = np.clip(rng.normal(0.5, 0.4, size=(8, 8)), 0.0, 1.0)
            pred = np.clip(gt + rng.normal(scale=0.2, size=(8, 8)), 0.0, 1.0)
            unknown = rng.random((8, 8)) < 0.7
            assert connectivity_error(gt, pred, unknown) == pytest.approx(reference_connectivity(gt, pred, unknown))

    def test_largest_component_ties_go_to_first_label(self):
        mask = np.array([[1, 0, 1], [1, 0, 1], [0, 0, 0]], dtype=bool)
        expected = np.array([[1, 0, 0], [1, 0, 0], [0, 0, 0]], dtype=bool)
        np.testing.assert_array_equal(largest_component(mask), expected)
        np.testing.assert_array_equal(largest_component(mask), flood_fill_largest(mask))
        assert not largest_component(np.zeros((3, 3), dtype=bool)).any()

    def test_diagonal_pixels_are_not_connected(self):
        mask = np.array([[1, 0], [0, 1]], dtype=bool)
        assert largest_component(mask).sum() == 1
