#!/usr/bin/env python3
# run.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
run.py
Developer entry point for hlab from a source checkout.
Adds --version and --config-info on top of the hlab command.
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add the project root to the Python path
sys.path.insert(0, str(Path(__file__).parent))

try:
    from src.core.config import EXPERIMENTS, get_config
    from src.main import main as main_entry
except ImportError as e:
    print(f"Error importing modules: {e}")
    print("Make sure you're running from the project root directory.")
    sys.exit(1)


def show_version() -> None:
    """Show version information."""
    try:
        import tomllib

        pyproject_path = Path(__file__).parent / "pyproject.toml"
        if pyproject_path.exists():
            with open(pyproject_path, "rb") as f:
                version = tomllib.load(f).get("project", {}).get("version", "unknown")
        else:
            version = "development"
    except Exception:
        version = "unknown"

    print(f"hlab v{version}")
    print("Helmholtz numerical laboratory")
    print("")
    print(f"Python: {sys.version}")
    print(f"Platform: {sys.platform}")


def show_config_info() -> None:
    """Show configuration information."""
    try:
        config = get_config()
        print("hlab Configuration:")
        print(f"  Log level: {config.logging.level}")
        print(f"  Log file: {config.logging.file}")
        print(f"  Output root: {config.output.root}")
        print(f"  Progress bars: {config.ui.show_progress}")
        print("  Available experiments:")
        for name in EXPERIMENTS:
            print(f"    - {name}")
    except Exception as e:
        print(f"Error loading configuration: {e}")


def main() -> int:
    """Main entry point for run.py."""
    args = sys.argv[1:]
    if "--config-info" in args:
        show_config_info()
        return 0
    if args[:1] == ["--version"]:
        show_version()
        return 0
    try:
        main_entry(args)
    except SystemExit as e:
        return int(e.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
