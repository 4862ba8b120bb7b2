"""ts-pendulum - Time-scale calculus and the forced relativistic pendulum."""

__version__ = "0.1.0"
