"""Flow-based acoustic model with stochastic duration and pitch prediction."""

__version__ = "0.1.0"
