"""Numerical services for ts-pendulum."""
