import logging
import sys

import numpy as np

LOGGER_NAME = "softbrier"
logger = logging.getLogger(LOGGER_NAME)

_LEVELS = {
    "error": logging.ERROR,
    "warning": logging.WARNING,
    "finish": logging.INFO,
    "info": logging.INFO,
    "normal": logging.INFO,
    "debug": logging.DEBUG,
}

_COLORS = {
    "error": "\033[1;41m",
    "warning": "\033[1;31m",
    "finish": "\033[1;32m",
    "info": "\033[1;33m",
}


class _ColorFormatter(logging.Formatter):

    def format(self, record):
        message = super().format(record)
        color = _COLORS.get(getattr(record, "message_type", "normal"))
        if color is None:
            return message
        return color + message + "\033[m"


def setup_logging(verbose=False, color=None):
    if color is None:
        color = sys.stderr.isatty()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_ColorFormatter("%(message)s") if color else logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return logger


def log(message: str, message_type: str = 'normal'):
    logger.log(_LEVELS.get(message_type, logging.INFO), message, extra={"message_type": message_type})


def no_progress(iterable=None, **kwargs):
    return iterable


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
