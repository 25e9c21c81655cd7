"""Package logger setup with a per-run context field.

Seeds train in parallel worker processes, each configuring the ``grasp_lab`` logger on
import. Every line carries ``run=<algorithm>/seed_<n>`` (or ``run=-`` outside a run) so
interleaved worker output stays attributable.
"""

from __future__ import annotations

import contextvars
import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from typing import TextIO

_LOGGER_NAME = "grasp_lab"
_DEFAULT_LEVEL = "INFO"
_NO_RUN = "-"
_DEFAULT_FORMAT = "%(asctime)s level=%(levelname)s logger=%(name)s run=%(run)s message=%(message)s"

_current_run: contextvars.ContextVar[str] = contextvars.ContextVar("grasp_lab_run", default=_NO_RUN)


class RunContextFilter(logging.Filter):
    """Stamp records with the active run label."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _current_run.get()
        return True


def _normalize_level(level_name: str | None) -> int:
    level = getattr(logging, (level_name or _DEFAULT_LEVEL).upper(), None)
    return level if isinstance(level, int) else logging.INFO


def configure_logging(level: str | None = None, stream: TextIO | None = None) -> logging.Logger:
    """Configure the ``grasp_lab`` logger; repeated calls only change the level.

    Parameters
    ----------
    level : str | None
        Level name; ``LOGLEVEL`` from the environment when omitted. Unknown names mean INFO.
    stream : TextIO | None
        Handler stream, stderr by default.

    Returns
    -------
    logging.Logger
        The package logger.
    """
    logger = logging.getLogger(_LOGGER_NAME)
    logger.setLevel(_normalize_level(level or os.getenv("LOGLEVEL", _DEFAULT_LEVEL)))

    if not logger.handlers:
        handler = logging.StreamHandler(stream)
        handler.setFormatter(logging.Formatter(_DEFAULT_FORMAT))
        handler.addFilter(RunContextFilter())
        logger.addHandler(handler)

    logger.propagate = False
    return logger


@contextmanager
def run_context(label: str) -> Iterator[str]:
    """Tag every package log line emitted inside the block with ``label``."""
    token = _current_run.set(label)
    try:
        yield label
    finally:
        _current_run.reset(token)


def current_run() -> str:
    return _current_run.get()


def log_with_fallback(
    logger: logging.Logger,
    level: int,
    message: str,
    *,
    fallback_print: bool = True,
) -> None:
    """Log ``message`` and, unless disabled, echo it on stdout.

    Collection rates, evaluation results and seed summaries go through here so CLI
    users see them even when stderr is redirected to a file.
    """
    logger.log(level, message)
    if fallback_print:
        print(message)
