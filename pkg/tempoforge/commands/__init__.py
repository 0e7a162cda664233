"""
Command-line commands.
"""
from .cli import build_parser, run_cli

__all__ = ["build_parser", "run_cli"]
