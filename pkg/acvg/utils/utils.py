import os
import sys
import time
from functools import wraps
from typing import Any, Callable, Optional

import numpy as np
from loguru import logger

from acvg.tensor import ParamStore

LOG_FORMAT = "{time} {level} {message}"


def read_lines(filepath: str) -> list[str]:
    lines = []
    with open(filepath, "r", encoding="utf-8") as f:
        for line in f:
            lines += [line.strip("\n")]

    return lines


def setup_logging(logpath: Optional[str] = None, level: str = "INFO") -> None:
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, enqueue=True, level=level)
    if logpath is not None:
        os.makedirs(os.path.dirname(logpath) or ".", exist_ok=True)
        logger.add(logpath, format=LOG_FORMAT, enqueue=True, rotation="2 GB", retention=1, level="DEBUG")
        logger.info(f"Writing logs to {logpath}.")


def timer(logger):
    def time_function(func) -> Callable[..., Any]:
        @wraps(func)
        def wrap_function(*args, **kwargs):
            start = time.time()
            result = func(*args, **kwargs)
            end = time.time()
            logger.info(
                f"Function {getattr(func, '__name__', func)} running on "
                f"process {os.getpid()} took {end-start:.4f}s."
            )
            return result

        return wrap_function

    return time_function


def count_parameters(store: ParamStore) -> int:
    return sum(p.size for p in store.values() if p.requires_grad)


def sequence_name(path: str) -> str:
    """Last component of a UNIX style path, without a trailing slash."""
    return os.path.basename(os.path.normpath(path))


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for (seed, key...)."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *key))
