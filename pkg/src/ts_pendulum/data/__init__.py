"""Result storage for ts-pendulum."""

from ts_pendulum.data.result_store import ResultStore

__all__ = ["ResultStore"]
