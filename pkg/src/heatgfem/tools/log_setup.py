"""
日志设置

各组件使用标准库 logging（heatgfem.<组件>），这里把整个 heatgfem 日志层级转交给 loguru 输出。
"""

from typing import Dict, Any, Optional
from pathlib import Path
import logging
import sys

from loguru import logger

LOGGER_NAME = "heatgfem"
LOGURU_FORMAT = "{time:YYYY-MM-DD HH:mm:ss,SSS} - {extra[name]} - {level} - {message}"


class InterceptHandler(logging.Handler):
    """把标准库日志记录转发到 loguru"""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno
        logger.bind(name=record.name).opt(exception=record.exc_info).log(level, record.getMessage())


def _translate_format(fmt: Optional[str]) -> str:
    if not fmt:
        return LOGURU_FORMAT
    return (fmt.replace("%(asctime)s", "{time:YYYY-MM-DD HH:mm:ss,SSS}")
               .replace("%(name)s", "{extra[name]}")
               .replace("%(levelname)s", "{level}")
               .replace("%(message)s", "{message}"))


def setup_logging(config: Optional[Dict[str, Any]] = None) -> logging.Logger:
    """按 logging 配置节设置输出目标

    max_file_size 对应 loguru 的 rotation，backup_count 对应 retention。
    """
    config = config or {}
    level = str(config.get("level", "INFO")).upper()
    fmt = _translate_format(config.get("format"))

    logger.remove()
    logger.configure(extra={"name": LOGGER_NAME})
    logger.add(sys.stderr, level=level, format=fmt)
    log_file = config.get("file")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(log_file, level=level, format=fmt,
                   rotation=str(config.get("max_file_size", "10MB")).replace("MB", " MB"),
                   retention=int(config.get("backup_count", 5)), encoding="utf-8")

    root = logging.getLogger(LOGGER_NAME)
    root.handlers = [InterceptHandler()]
    root.setLevel(level)
    root.propagate = False
    return root
