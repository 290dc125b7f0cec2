"""Command-line interface and file formats."""

from kinoloco.cli.main import main

__all__ = ["main"]
