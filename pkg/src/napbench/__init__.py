"""Benchmark of MLP, LSTM and CNN next-activity predictors over five categorical encodings."""

__version__ = "0.1.0"
