"""Logging setup for syntag, built on ``loguru``.

Reports (predictions, scores, gradient-check tables) are printed by the
command line layer; everything diagnostic flows through the logger defined
here.
"""

import sys
from collections import Counter
from contextlib import contextmanager
from copy import copy
from functools import wraps
from pathlib import Path
from warnings import catch_warnings, warn

from loguru import logger

NO_DEBUG_LEVELS = ["INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]
LOGGER_STATE = {"levels": NO_DEBUG_LEVELS, "python_standard_warnings": False}
STDOUT_LEVELS = ["DEBUG", "INFO", "SUCCESS"]

format_mapping = {
    "DEBUG": "[<lvl>D</>] [{name}:{function}:{line}] <lvl>{message}</>",
    "INFO": "[<lvl>I</>] <lvl>{message}</>",
    "SUCCESS": "[<lvl>S</>] <lvl>{message}</>",
    "WARNING": "[<lvl>W</>] [{name}:{function}:{line}] <lvl>{message}</>",
    "ERROR": "[<lvl>E</>] [{name}:{function}:{line}] <lvl>{message}</>",
    "CRITICAL": "[<lvl>C</>] [{name}:{function}:{line}] <lvl>{message}</>",
}


def level_filter(names):
    """Returns a loguru filter passing only records whose level is in
    ``names``."""

    def f(record):
        return record["level"].name in names

    return f


def add_sinks(sink, levels, colorize=None):
    """Adds one handler per level to ``sink``. File sinks are written
    without color and through a queue so that worker threads can log."""

    is_file = isinstance(sink, (str, Path))
    for level in levels:
        logger.add(
            sink,
            filter=level_filter([level]),
            format=format_mapping[level],
            colorize=(not is_file) if colorize is None else colorize,
            backtrace=True,
            enqueue=is_file,
        )


def configure_loggers(
    levels=LOGGER_STATE["levels"],
    python_standard_warnings=LOGGER_STATE["python_standard_warnings"],
):
    """Resets loguru to console-only handlers for the requested levels.

    Parameters
    ----------
    levels : list of str
        Levels to emit. Debug, info and success go to stdout, the rest to
        stderr.
    python_standard_warnings : bool, optional
        If True, ``logger.warning`` and ``logger.error`` additionally raise a
        dummy Python warning so tests can assert on them.
    """

    logger.remove(None)
    for level in levels:
        sink = sys.stdout if level in STDOUT_LEVELS else sys.stderr
        add_sinks(sink, [level])

    if python_standard_warnings:
        logger.add(lambda _: warn("DUMMY WARNING"), level="WARNING")
        logger.add(lambda _: warn("DUMMY ERROR"), level="ERROR")


def logger_setup(state, d=None):
    """Sets up the logger for a command line run.

    state==debug logs everything to the console and additionally writes the
    debug stream to d/log.debug. state==normal logs info and above.
    state==no_console removes the console handlers entirely, which is what
    joblib sweeps want. If a directory is given, d/log.out and d/log.err
    are written in every state.

    All console output goes to stderr: stdout carries the reports, so
    ``syntag_run command=predict > spans.tsv`` stays clean.
    """

    logger.remove(None)

    if state == "debug":
        add_sinks(sys.stderr, ["DEBUG"] + NO_DEBUG_LEVELS)
    elif state == "normal":
        add_sinks(sys.stderr, NO_DEBUG_LEVELS)
    elif state == "no_console":
        pass
    else:
        raise ValueError(f"unknown logging state {state}")

    if d is None:
        return

    d = Path(d)
    d.mkdir(parents=True, exist_ok=True)
    if state == "debug":
        add_sinks(d / "log.debug", ["DEBUG"])
    add_sinks(d / "log.out", ["INFO", "SUCCESS"])
    add_sinks(d / "log.err", ["WARNING", "ERROR", "CRITICAL"])


@contextmanager
def disable_logger():
    """Context manager for disabling the logger."""

    logger.disable("")
    try:
        yield None
    finally:
        logger.enable("")


@contextmanager
def logger_testing_mode():
    """Within this context, warnings and errors logged through loguru also
    raise a Python warning ("DUMMY WARNING" / "DUMMY ERROR")."""

    state = copy(LOGGER_STATE)
    LOGGER_STATE["python_standard_warnings"] = True
    configure_loggers(levels=state["levels"], python_standard_warnings=True)
    try:
        yield None
    finally:
        LOGGER_STATE.update(state)
        configure_loggers(**state)


@contextmanager
def logger_debug():
    state = copy(LOGGER_STATE)
    configure_loggers(levels=["DEBUG"] + copy(NO_DEBUG_LEVELS))
    try:
        yield None
    finally:
        configure_loggers(**state)


def log_warnings(f):
    """Collects Python warnings raised inside ``f`` and re-emits each
    distinct one once through the logger, with its count."""

    @wraps(f)
    def wrapper(*args, **kwargs):
        with catch_warnings(record=True) as caught:
            output = f(*args, **kwargs)
        counts = Counter(
            f"{w.category.__name__}: {w.message}" for w in caught
        )
        for message, num in counts.items():
            logger.warning(f"Occurred {num} times: {message}")
        return output

    return wrapper


configure_loggers()
