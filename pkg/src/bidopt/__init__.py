"""Two-stage tCPA bid optimisation: a monotone price-volume model sets the
daily target, an hourly PID / sequence-policy controller adjusts it."""

__version__ = "0.1.0"
