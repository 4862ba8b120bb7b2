"""Unit tests for ts-pendulum."""
