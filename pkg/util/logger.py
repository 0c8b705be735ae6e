import logging
from typing import Dict, Optional

import colorlog

from config import LOGGING_CONFIG

_loggers: Dict[str, "BenchLogger"] = {}

_LOG_COLORS = {
    'DEBUG': 'blue',
    'INFO': 'green',
    'WARNING': 'yellow',
    'ERROR': 'red',
    'CRITICAL': 'red,bg_white'
}


class BenchLogger:
    def __init__(self, name: str, level: Optional[str] = None):
        self.logger = logging.getLogger(f"prognosis.{name}")
        self.logger.setLevel(getattr(logging, (level or LOGGING_CONFIG["level"]).upper(), logging.INFO))
        self.logger.propagate = False
        self.logger.handlers.clear()

        self.context = self._get_clean_context(name)

        console_handler = colorlog.StreamHandler()
        console_handler.setFormatter(colorlog.ColoredFormatter(
            fmt='%(asctime)s %(log_color)s[%(levelname)s]%(reset)s %(log_color)s[%(context)s]%(reset)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S',
            reset=True,
            log_colors=_LOG_COLORS
        ))
        console_handler.addFilter(self._add_context)
        self.logger.addHandler(console_handler)

    def _get_clean_context(self, module_name: str) -> str:
        """models.survival_models -> SurvivalModels"""
        if module_name == '__main__':
            return 'Main'
        clean_name = module_name.split('.')[-1]
        return ''.join(word.capitalize() for word in clean_name.split('_'))

    def _add_context(self, record):
        record.context = self.context
        return True

    def set_level(self, level: str):
        self.logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    def info(self, message: str):
        self.logger.info(message)

    def error(self, message: str):
        self.logger.error(message)

    def warning(self, message: str):
        self.logger.warning(message)

    def debug(self, message: str):
        self.logger.debug(message)


def get_logger(name: str = None) -> BenchLogger:
    """One logger per module name, created on first use."""
    key = name or '__main__'
    if key not in _loggers:
        _loggers[key] = BenchLogger(key)
    return _loggers[key]


def set_global_level(level: str):
    LOGGING_CONFIG["level"] = level
    for bench_logger in _loggers.values():
        bench_logger.set_level(level)
