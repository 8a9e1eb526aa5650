"""contilog: continuous first-order logic over metric structures."""

__version__ = "0.1.0"
