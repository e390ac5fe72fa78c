"""Pause the cyclic garbage collector around bulk, acyclic allocation."""

from __future__ import annotations

import contextlib
import gc


@contextlib.contextmanager
def gc_paused():
    # Parsing and graph building allocate millions of small acyclic objects;
    # full collections over that heap make the run time grow faster than linear.
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()
