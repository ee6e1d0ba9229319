"""Daily hearing-aid usage forecasting with an attention encoder-decoder
LSTM, benchmarked against a plain LSTM and explained with Shapley-value
attributions."""

__version__ = "0.1.0"
