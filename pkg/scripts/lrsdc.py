"""Command-line entry point for the low-rank SDC harness.

Usage:
    python scripts/lrsdc.py run configs/manufactured-desk.cfg --jobs 4
    python scripts/lrsdc.py run --profile desk --problem rotation
    python scripts/lrsdc.py list-problems
    python scripts/lrsdc.py weights 3
    python scripts/lrsdc.py truncate-demo soft 1e-3 matrix.npy
"""

import sys
from pathlib import Path

# Make stdout/stderr UTF-8 so unicode log prints (✓, ✗) don't crash on Windows cp1252.
if hasattr(sys.stdout, "reconfigure"):
    sys.stdout.reconfigure(encoding="utf-8", errors="replace")
if hasattr(sys.stderr, "reconfigure"):
    sys.stderr.reconfigure(encoding="utf-8", errors="replace")

# Ensure project root is on the path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from harness.cli import main


if __name__ == "__main__":
    sys.exit(main())
