# -*- coding: utf-8 -*-
import logging
import os

from earlock.earlock.exceptions import ValidationError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
ROOT_LOGGER = "earlock"


# ─── Logging ─────────────────────────────────────────────────────────────────

def logger(module=None):
    """Logger under the earlock namespace; ``module`` is usually ``__name__``."""
    if not module:
        return logging.getLogger(ROOT_LOGGER)
    if module.startswith(ROOT_LOGGER):
        return logging.getLogger(module)
    return logging.getLogger(f"{ROOT_LOGGER}.{module}")


def log_error(message, title=None):
    """Record a titled error entry and keep going."""
    log = logging.getLogger(ROOT_LOGGER)
    if title:
        log.error("[%s] %s", title, message)
    else:
        log.error("%s", message)


def setup_logging(level=logging.INFO):
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level)
    if not any(getattr(h, "_earlock", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._earlock = True
        root.addHandler(handler)
    return root


# ─── Errors ──────────────────────────────────────────────────────────────────

def throw(message, exc=ValidationError):
    raise exc(message)


# ─── Parallelism ─────────────────────────────────────────────────────────────

def thread_count(configured=None):
    """Worker cap: explicit value, then EARLOCK_THREADS, then 1."""
    value = configured or os.environ.get("EARLOCK_THREADS") or 1
    try:
        value = int(value)
    except (TypeError, ValueError):
        throw(f"Thread count must be an integer, got {value!r}")
    return max(1, value)


def ordered_map(fn, items, threads=1):
    """Map ``fn`` over ``items`` keeping input order whatever the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
