"""Allow ``python -m tempoforge``."""
import sys

from tempoforge.main import main

if __name__ == "__main__":
    sys.exit(main())
