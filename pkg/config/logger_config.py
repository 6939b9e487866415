import logging
import logging.handlers
import os
from pathlib import Path
from typing import Optional, Union

from pythonjsonlogger import jsonlogger
from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "noise_adapter"


def setup_logging(
    log_level: Optional[str] = None,
    log_file: Optional[Union[str, Path]] = None,
    enable_console: bool = True,
    enable_file: bool = True,
    json_file: bool = True,
) -> logging.Logger:
    """Configure the package logger: rich console output plus a rotating file.

    The LOG_LEVEL environment variable wins over `log_level`. The file handler
    is only attached when `log_file` is given.
    """
    level = (os.getenv("LOG_LEVEL") or log_level or "INFO").upper()

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, level, logging.INFO))
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers = []
    logger.propagate = False

    if enable_console:
        console_handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=True,
            log_time_format="[%X]",
        )
        console_handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(console_handler)

    if enable_file and log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=10485760,  # 10MB
            backupCount=10,
            encoding="utf-8",
        )
        if json_file:
            file_formatter = jsonlogger.JsonFormatter(
                "%(asctime)s %(name)s %(levelname)s %(filename)s %(lineno)d %(message)s"
            )
        else:
            file_formatter = logging.Formatter(
                "%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s"
            )
        file_handler.setFormatter(file_formatter)
        logger.addHandler(file_handler)

    return logger
