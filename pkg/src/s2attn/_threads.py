"""Worker-pool size used by the compiled kernels.

Kernel results are bitwise independent of this setting: parallelism is
over independent output items with a fixed reduction order inside each.
"""

import os

_num_threads = os.cpu_count() or 1


def set_num_threads(n: int) -> None:
    global _num_threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads
