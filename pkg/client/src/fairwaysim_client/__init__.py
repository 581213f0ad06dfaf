"""Thin TCP client for a fairwaysim vessel service.

Everything here is plumbing: the simulation, reward shaping, and episode
bookkeeping all live on the server, and this package only moves JSON
lines back and forth.
"""

from .env import BoxSpace, RemoteEnv
from .wire import (
    BadResponse,
    ClientError,
    ConnectionLost,
    JsonLineConnection,
    RemoteError,
)

__all__ = [
    "BadResponse",
    "BoxSpace",
    "ClientError",
    "ConnectionLost",
    "JsonLineConnection",
    "RemoteEnv",
    "RemoteError",
]
