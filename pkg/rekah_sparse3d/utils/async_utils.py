"""bounded thread fan-out for per-scene work"""

import asyncio
from typing import Awaitable, Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


async def map_in_threads(function: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """run function(item) on worker threads, at most `jobs` at once

    Args:
        function: blocking callable, must not touch shared mutable state
        items: inputs
        jobs: concurrency bound (>= 1)

    Returns:
        results in input order, whatever the completion order
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    semaphore = asyncio.Semaphore(jobs)

    async def run_one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(function, item)

    return list(await asyncio.gather(*(run_one(item) for item in items)))


def run_sync(coroutine: Awaitable[R]) -> R:
    """drive a coroutine from synchronous code"""
    return asyncio.run(coroutine)
