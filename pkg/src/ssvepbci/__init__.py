"""SSVEP BCI toolkit."""
