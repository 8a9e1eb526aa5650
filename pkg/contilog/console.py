"""
Console helpers

Coloured stderr output, syntax-highlighted JSON blocks and a logging handler
that routes library log records through the same colours.
"""

import logging
import sys
from typing import Any

from pygments import highlight
from pygments.formatters import Terminal256Formatter
from pygments.lexers import JsonLexer
from pygments.util import ClassNotFound

from . import config

# ANSI color codes
BLUE = "\033[94m"      # General text
GREEN = "\033[92m"     # Success messages
RED = "\033[91m"       # Error messages
YELLOW = "\033[33m"    # Warnings
BOLD = "\033[1m"       # Headers
RESET = "\033[0m"      # Reset all formatting

# Available themes with descriptions
THEMES = {
    'monokai': 'Dark theme with vibrant colors (like Sublime Text)',
    'one-dark': 'Atom-inspired dark theme with subtle colors',
    'solarized-dark': 'Popular dark theme with carefully chosen colors',
    'solarized-light': 'Light version of the Solarized theme',
    'dracula': 'Dark theme with modern colors',
    'gruvbox-dark': 'Retro groove dark theme',
    'gruvbox-light': 'Retro groove light theme',
    'nord': 'Arctic-inspired dark theme',
    'vs': 'Light theme inspired by Visual Studio',
    'zenburn': 'Low contrast dark theme easy on the eyes'
}

CURRENT_THEME = config.THEME

_LEVEL_COLORS = {
    logging.DEBUG: BLUE,
    logging.INFO: BLUE,
    logging.WARNING: YELLOW,
    logging.ERROR: RED,
    logging.CRITICAL: RED,
}


def set_theme(theme_name: str) -> bool:
    """Set the current syntax highlighting theme"""
    global CURRENT_THEME
    if theme_name in THEMES:
        CURRENT_THEME = theme_name
        return True
    return False


def use_color(stream: Any = None) -> bool:
    stream = stream or sys.stderr
    return hasattr(stream, "isatty") and stream.isatty()


def color_print(text: str, color: str = BLUE) -> None:
    """Print text in color on stderr (plain when stderr is not a terminal)"""
    if use_color(sys.stderr):
        print(f"{color}{text}{RESET}", file=sys.stderr, flush=True)
    else:
        print(text, file=sys.stderr, flush=True)


def print_json_block(text: str, stream: Any = None) -> None:
    """Write a JSON document, highlighted with the current theme on terminals"""
    stream = stream or sys.stdout
    if not use_color(stream):
        stream.write(text + "\n")
        return
    try:
        stream.write(highlight(text, JsonLexer(), Terminal256Formatter(style=CURRENT_THEME)))
    except ClassNotFound:
        color_print(f"Theme error: unknown style {CURRENT_THEME}. Falling back to plain output.", RED)
        stream.write(text + "\n")


def print_error(text: str) -> None:
    color_print(f"error: {text}", RED)


def print_info(text: str) -> None:
    color_print(text, BLUE)


def print_success(text: str) -> None:
    color_print(text, GREEN)


class ColorHandler(logging.Handler):
    """Logging handler writing records through :func:`color_print`."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            color_print(self.format(record), _LEVEL_COLORS.get(record.levelno, BLUE))
        except Exception:
            self.handleError(record)


def configure_logging(verbosity: int = 0) -> logging.Logger:
    """Install the colour handler on the package logger (0 warn, 1 info, 2+ debug)"""
    logger = logging.getLogger("contilog")
    for handler in list(logger.handlers):
        if isinstance(handler, ColorHandler):
            logger.removeHandler(handler)
    handler = ColorHandler()
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG)
    return logger
