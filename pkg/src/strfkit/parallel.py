"""Thread-cap plumbing; STRFKIT_THREADS bounds every parallel code path."""

import os


def n_threads() -> int:
    """Parallelism cap from STRFKIT_THREADS; defaults to 1 (sequential)."""
    raw = os.environ.get("STRFKIT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def fft_workers() -> int:
    return n_threads()
