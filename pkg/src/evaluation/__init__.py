# Evaluation package
