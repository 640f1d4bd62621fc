"""Space-time masked video autoencoder, attention readouts, 4D task metrics,
and a synthetic-world training/evaluation harness."""

__version__ = "0.1.0"
