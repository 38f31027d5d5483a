"""Probabilistic spatio-temporal forecasting with a convolutional graph auto-encoder."""
