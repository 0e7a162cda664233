"""
Entry point and logging setup.
"""
import logging
import sys
from typing import List, Optional

from tempoforge.config import get_settings


def configure_logging() -> None:
    settings = get_settings()
    level = logging.DEBUG if settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if settings.log_file and not settings.debug:
        handlers.append(logging.FileHandler(settings.log_file))
    else:
        handlers.append(logging.NullHandler())
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return its exit code."""
    configure_logging()
    from tempoforge.commands.cli import run_cli

    logger.debug(f"Arguments: {argv if argv is not None else sys.argv[1:]}")
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
