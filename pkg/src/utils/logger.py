"""
Logger Configuration for vl-distill
Console logging on stderr for every module, plus an optional per-run log file
written next to the run's artifacts
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

ROOT_LOGGER = "vl_distill"
RUN_LOG_NAME = "run.log"

CONSOLE_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s %(levelname)s %(name)s %(funcName)s:%(lineno)d %(message)s"
DATE_FORMAT = "%H:%M:%S"


def _level(level: str) -> int:
    value = logging.getLevelName(str(level).upper())
    if not isinstance(value, int):
        raise ValueError(f"Unknown log level: {level}")
    return value


def setup_logger(name: str = ROOT_LOGGER, log_level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure a logger with a stderr console handler

    stdout is left to CLI results, so the console handler always writes to stderr.

    Args:
        name: Logger name
        log_level: Console level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file that receives every record at DEBUG

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.handlers.clear()
    logger.propagate = False
    logger.setLevel(logging.DEBUG if log_file else _level(log_level))

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(_level(log_level))
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(console)

    if log_file:
        attach_run_log(logger, log_file)
    return logger


class RunLogHandler(logging.FileHandler):
    """File handler added by attach_run_log; the only handler that pins a logger at DEBUG"""


def attach_run_log(logger: logging.Logger, path: str) -> RunLogHandler:
    """
    Append every record of a logger to a run log file

    Args:
        logger: Logger instance (normally the root from get_logger())
        path: Log file; parent directories are created

    Returns:
        The added file handler (pass it to detach_run_log when the run ends)
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    handler = RunLogHandler(target, mode="a", encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(FILE_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)
    logger.debug(f"Logging to file: {target}")
    return handler


def detach_run_log(logger: logging.Logger, handler: logging.Handler):
    logger.removeHandler(handler)
    handler.close()
    consoles = [h.level for h in logger.handlers if type(h) is logging.StreamHandler]
    logger.setLevel(min(consoles) if consoles else logging.WARNING)


def get_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """
    Get a logger under the vl_distill root

    Module loggers ("vl_distill.training") propagate to the root, which is
    configured on first use.

    Args:
        name: Logger name (module names are mapped under the root)

    Returns:
        Logger instance
    """
    root = logging.getLogger(ROOT_LOGGER)
    if not root.handlers:
        setup_logger(ROOT_LOGGER)

    if name == ROOT_LOGGER:
        return root
    if name.startswith("src."):
        name = name[len("src."):]
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_fields(values: Dict[str, Any]) -> str:
    """key=value pairs in insertion order"""
    return " ".join(f"{key}={_format_value(value)}" for key, value in values.items())


def log_epoch(logger: logging.Logger, phase: str, epoch: int, values: Dict[str, Any]):
    """
    Log one structured line per epoch

    Args:
        logger: Logger instance
        phase: "train" or "fewshot"
        epoch: Epoch number (1-based)
        values: Loss values, learning rate and any evaluated metrics
    """
    logger.info(f"phase={phase} epoch={epoch} {format_fields(values)}")


def log_metric_report(logger: logging.Logger, report):
    """
    Log a MetricReport

    Args:
        logger: Logger instance
        report: MetricReport to log
    """
    fields = {"metric": report.metric, "dataset": report.dataset, **report.params,
              "value": report.value, "count": report.count}
    logger.info(format_fields(fields))


def log_error(logger: logging.Logger, error: Exception, context: str = ""):
    """
    Log an error with context

    Args:
        logger: Logger instance
        error: Exception that occurred
        context: Additional context about the error
    """
    error_msg = f"Error: {str(error)}"
    if context:
        error_msg = f"{context} - {error_msg}"

    logger.error(error_msg, exc_info=logger.isEnabledFor(logging.DEBUG))


def set_log_level(logger: logging.Logger, level: str):
    """Set the console level; a logger with a run log keeps DEBUG for the file"""
    value = _level(level)
    has_run_log = False
    for handler in logger.handlers:
        if isinstance(handler, RunLogHandler):
            has_run_log = True
        elif type(handler) is logging.StreamHandler:
            handler.setLevel(value)
    logger.setLevel(logging.DEBUG if has_run_log else value)
