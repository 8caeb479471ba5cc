"""Hull-form optimization with PCA shape compression and a deep MLP surrogate."""

__version__ = "0.1.0"
