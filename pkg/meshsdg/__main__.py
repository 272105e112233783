import sys

from meshsdg.cli import main

if __name__ == "__main__":
    sys.exit(main())
