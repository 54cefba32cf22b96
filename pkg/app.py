#!/usr/bin/env python3
"""
Entry point for flowlhd

Usage: python app.py <command> [options]; run with --help for the command list.
"""
import os
import sys

# Add current directory to Python path
current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from src.cli import main  # noqa: E402

if __name__ == '__main__':
    sys.exit(main())
