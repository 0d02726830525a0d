import sys

from saddle_scout.main import main

if __name__ == "__main__":
    sys.exit(main())
