"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python twin is
the fallback. Set ``ETCONSENSUS_BACKEND=pure`` to force the fallback (used by
the benchmark and backend-equivalence tests).
"""

from __future__ import annotations

import os

from . import _pure

_forced = os.environ.get("ETCONSENSUS_BACKEND", "").strip().lower()

if _forced == "pure":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"
    if _forced and _forced != BACKEND:
        raise ImportError(
            f"requested backend {_forced!r} is unavailable (have {BACKEND!r})"
        )

run_hybrid = _impl.run_hybrid
run_ltv = _impl.run_ltv


def available_backends() -> tuple[str, ...]:
    names = ["pure"]
    try:
        from . import _fast  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return tuple(names)


def get_backend(name: str | None = None):
    """Kernel module for ``name`` ("compiled"/"pure"); default selection if None."""
    if name is None:
        return _impl
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _fast

        return _fast
    raise ValueError(f"unknown backend {name!r}")
