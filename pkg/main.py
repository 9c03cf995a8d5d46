"""Main entry point for the LCP protocol lab."""
import sys

from lcplab.cli import main

if __name__ == "__main__":
    sys.exit(main())
