# matteforge package
