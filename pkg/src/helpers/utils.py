#!/usr/bin/env python3
# src/helpers/utils.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/helpers/utils.py
Artifact writing, provenance and the ordered worker pool used by experiments.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

FLOAT_FORMAT = "%.16e"
TRACKED_PACKAGES = ("numpy", "scipy", "PyYAML", "click", "tqdm")


def _jsonable(value: Any) -> Any:
    """numpy scalars, arrays and tuples as plain JSON values; non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, separators=(",", ":"))


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def package_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def provenance(config: Dict[str, Any], grid: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Config echo, its hash, package versions and grid metadata; no timestamps."""
    return {
        "config": config,
        "config_hash": config_hash(config),
        "versions": package_versions(),
        "platform": sys.platform,
        "grid": grid,
    }


class ArtifactWriter:
    """Writes the files of one run under ``root`` and can remove them again."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: List[Path] = []
        self.created_dirs: List[Path] = []

    def _path(self, name: str) -> Path:
        path = self.root / name
        missing = [d for d in (path.parent, *path.parent.parents) if not d.exists()]
        path.parent.mkdir(parents=True, exist_ok=True)
        self.created_dirs.extend(reversed(missing))
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._path(name)
        path.write_text(text, encoding="utf-8")
        self.written.append(path)
        logger.debug(f"Created file: {path}")
        return path

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header: str, rows: Any) -> Path:
        """Numeric table with a fixed float format; ``rows`` is 2-D."""
        path = self._path(name)
        table = np.asarray(rows, dtype=float)
        if table.size == 0:
            table = table.reshape(0, len(header.split(",")))
        elif table.ndim == 1:
            table = table.reshape(1, -1)
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=FLOAT_FORMAT)
        self.written.append(path)
        logger.debug(f"Created file: {path}")
        return path

    def discard(self) -> None:
        """Remove every file written so far, then the directories this writer created."""
        for path in reversed(self.written):
            try:
                path.unlink()
            except FileNotFoundError:
                pass
        if self.written:
            logger.info(f"Removed {len(self.written)} partial artifact(s) from {self.root}")
        for directory in reversed(self.created_dirs):
            try:
                directory.rmdir()
            except OSError:
                pass  # not empty: holds files from elsewhere
        self.written.clear()
        self.created_dirs.clear()


def ordered_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    desc: Optional[str] = None,
    show_progress: bool = True,
) -> List[R]:
    """Apply ``fn`` to ``items`` in a thread pool, returning results in input order."""
    items = list(items)
    bar = tqdm(total=len(items), desc=desc, disable=not show_progress or len(items) < 2, leave=False)
    try:
        if workers <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                bar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, item) for item in items]
            results = []
            for future in futures:
                results.append(future.result())
                bar.update(1)
            return results
    finally:
        bar.close()


def mapper(workers: int = 1, desc: Optional[str] = None, show_progress: bool = True) -> Callable[[Callable, Iterable], List]:
    """``map``-shaped adapter over ``ordered_map`` for library functions taking a mapper."""

    def apply(fn: Callable, items: Iterable) -> List:
        return ordered_map(fn, list(items), workers, desc, show_progress)

    return apply
