"""
Timing decorators shared by the reasoning stages.
"""

import time
import logging
from contextlib import contextmanager
from functools import wraps
from typing import Dict

logger = logging.getLogger(__name__)


def timing_decorator(func):
    """Decorator to measure and log execution time of functions."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        logger.info(f"Starting {func.__name__}")

        try:
            result = func(*args, **kwargs)
        except Exception as e:
            elapsed_time = time.perf_counter() - start_time
            logger.error(f"Failed {func.__name__} after {elapsed_time:.4f} seconds: {e}")
            raise

        elapsed_time = time.perf_counter() - start_time
        logger.info(f"Completed {func.__name__} in {elapsed_time:.4f} seconds")
        return result

    return wrapper


@contextmanager
def stage_timer(timings: Dict[str, float], stage: str):
    """
    Record the wall time of a pipeline stage into ``timings``.

    The entry is written even when the stage raises, so partial runs
    still report how far they got.
    """
    start_time = time.perf_counter()
    logger.info(f"Stage {stage} started")
    try:
        yield
    finally:
        timings[stage] = round(time.perf_counter() - start_time, 6)
        logger.info(f"Stage {stage} finished in {timings[stage]:.4f} seconds")

