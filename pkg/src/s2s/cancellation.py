"""Cooperative cancellation tokens.

Backends check the token between stream items, so cancellation is
observed within one item regardless of which context requested it.
"""

from __future__ import annotations

import threading


class CancelToken:
    """Thread-safe one-way flag shared across concurrent flows."""

    def __init__(self):
        self._event = threading.Event()

    def cancel(self) -> None:
        self._event.set()

    @property
    def cancelled(self) -> bool:
        return self._event.is_set()

    def raise_if_cancelled(self) -> None:
        if self._event.is_set():
            raise OperationCancelled()


class OperationCancelled(Exception):
    """Raised by flows that prefer unwinding over returning early."""
