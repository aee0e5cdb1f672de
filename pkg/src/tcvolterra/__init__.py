"""Time-changed Levy noise, stochastic Volterra control, and maximum-principle checks."""

__version__ = "0.1.0"
