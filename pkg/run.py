#!/usr/bin/env python3
"""
rankfusion - Main Entry Point
Run this script with a subcommand, e.g. `python run.py fit --help`
"""

import sys
from pathlib import Path

# Add project root to Python path for imports
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

if __name__ == "__main__":
    # Import after path setup
    from src.api.main import main

    sys.exit(main(sys.argv[1:]))
