"""FastCubic cubic-regularization optimizer."""
