"""Committee-based demand forecasting with a double deep Q-learning model selector."""

__version__ = "0.1.0"
