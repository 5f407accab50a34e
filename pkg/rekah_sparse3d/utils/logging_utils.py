"""logging utilities with rich support"""

import functools
from datetime import datetime

from rich.console import Console
from rich.theme import Theme

from rekah_sparse3d.utils.config_utils import get_config_value
from rekah_sparse3d.utils.singleton_utils import SingletonInstance


# custom theme for log levels
custom_theme = Theme({
    "info": "cyan",
    "warning": "yellow",
    "error": "bold red",
    "debug": "dim white",
})

LEVELS = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40}


class Logger(SingletonInstance):
    """singleton logger class with rich support

    writes to stderr: stdout is reserved for command output.
    """

    def __init__(self, prefix: str = "rekah-sparse3d", level: str = None):
        """initialize logger

        Args:
            prefix: log message prefix
            level: minimum level to print (defaults to config.ini [logging] level)
        """
        self.prefix = prefix
        self.console = Console(theme=custom_theme, stderr=True)
        self.level = LEVELS["INFO"]
        self.set_level(level or get_config_value("logging", "level", default="INFO"))

    def set_level(self, level: str):
        """set minimum level by name (DEBUG, INFO, WARNING, ERROR)"""
        name = level.upper()
        if name not in LEVELS:
            raise ValueError(f"unknown log level: {level}")
        self.level = LEVELS[name]

    def _format(self, level: str, message: str) -> str:
        """format log message"""
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        return f"[{timestamp}] [{self.prefix}] {level}: {message}"

    def _emit(self, level: str, message: str, style: str):
        if LEVELS[level] < self.level:
            return
        # markup off: messages carry paths and brackets
        self.console.print(self._format(level, message), style=style, markup=False)

    def info(self, message: str):
        """log info level message"""
        self._emit("INFO", message, "info")

    def error(self, message: str):
        """log error level message"""
        self._emit("ERROR", message, "error")

    def warning(self, message: str):
        """log warning level message"""
        self._emit("WARNING", message, "warning")

    def debug(self, message: str):
        """log debug level message"""
        self._emit("DEBUG", message, "debug")


def logging_func(desc: str = ""):
    """decorator for function logging

    Args:
        desc: description of the function
    """
    def decorator(function):
        @functools.wraps(function)
        def wrapper(*args, **kwargs):
            Logger.instance().info(f"[start] {function.__name__} - {desc}")
            result = function(*args, **kwargs)
            Logger.instance().info(f"[end] {function.__name__}")
            return result
        return wrapper
    return decorator
