"""Training and evaluating LSTM language models with explicit negative examples."""

__version__ = "0.1.0"
