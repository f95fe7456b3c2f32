"""Seeded Monte Carlo trials on a process pool, collected in trial order."""
from __future__ import annotations

import logging
import pickle
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from functools import partial
from typing import Callable, TypeVar

from .core import RandomSource, ValidationError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def _one(fn: Callable[[int, RandomSource], T], seed: int, i: int) -> T:
    return fn(i, RandomSource(seed, i))


def _picklable(fn: Callable) -> bool:
    try:
        pickle.dumps(fn)
    except (pickle.PicklingError, AttributeError, TypeError):
        return False
    return True


def run_trials(
    fn: Callable[[int, RandomSource], T],
    seed: int,
    trials: int,
    workers: int | None = None,
) -> list[T]:
    """Call fn(i, RandomSource(seed, i)) for i in range(trials).

    Each trial owns its substream, so results depend on (seed, i) only and not
    on scheduling. workers=1 runs inline. Trials go to worker processes when fn
    can be pickled (a module-level function or a functools.partial of one) and
    to threads otherwise.
    """
    if trials < 0:
        raise ValidationError(f"trials must be >= 0, got {trials}")

    one = partial(_one, fn, seed)
    if workers == 1 or trials <= 1:
        results = [one(i) for i in range(trials)]
        kind = "inline"
    else:
        pool: Executor
        if _picklable(fn):
            pool, kind = ProcessPoolExecutor(max_workers=workers), "processes"
        else:
            logger.debug(f"Trial function {fn!r} cannot be pickled; running trials on threads")
            pool, kind = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="trial"), "threads"
        with pool:
            results = list(pool.map(one, range(trials)))
    logger.debug(f"Completed {trials} trials (seed={seed}, workers={workers or 'auto'}, {kind})")
    return results
