"""Run the acceptance suite and print one pass/fail line per criterion."""
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

if __name__ == "__main__":
    sys.exit(pytest.main(["-q", os.path.join(ROOT, "tests", "test_acceptance.py"), *sys.argv[1:]]))
