"""Tests for ts-pendulum."""
