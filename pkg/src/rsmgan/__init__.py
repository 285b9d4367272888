"""Seasonality-aware adversarial anomaly detection for multivariate time series."""
