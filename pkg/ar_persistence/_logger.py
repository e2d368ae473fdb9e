import logging
import sys

LOGGER_NAME = "ar_persistence"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

logger = logging.getLogger(LOGGER_NAME)


def configure_logging(level: int = logging.WARNING) -> logging.Logger:
    """
    Attach a single stderr handler to the package logger and set its level.

    Calling it again only updates the level.

    Args:
        level: A logging level such as logging.INFO.

    Returns:
        logging.Logger: The package logger.
    """
    if not any(getattr(h, "_ar_persistence", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._ar_persistence = True
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger
