#!/usr/bin/env python3
import sys
import os

# Ensure we can import from src
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from saddle_scout.main import main

if __name__ == "__main__":
    sys.exit(main())
