"""Frame sources feeding pixel data to the trackers."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ArrayFrames:
    """In-memory frames, 1-based indexing into a list of 2-D arrays."""

    def __init__(self, frames: list[np.ndarray], first_frame: int = 1):
        self._frames = frames
        self._first = first_frame

    def get(self, frame: int) -> np.ndarray | None:
        idx = frame - self._first
        if 0 <= idx < len(self._frames):
            img = np.asarray(self._frames[idx], dtype=np.float64)
            if img.max() > 1.5:  # uint8-range input
                img = img / 255.0
            return img
        return None


class PgmDirFrames:
    """Lazy loader for frame%06d.pgm files in a directory, with a small cache."""

    def __init__(self, directory: str | Path, cache_size: int = 4):
        self._dir = Path(directory)
        self._cache: dict[int, np.ndarray] = {}
        self._cache_size = cache_size

    def get(self, frame: int) -> np.ndarray | None:
        if frame in self._cache:
            return self._cache[frame]
        path = self._dir / f"frame{frame:06d}.pgm"
        if not path.exists():
            return None
        from ..formats import read_pgm

        img = read_pgm(path).astype(np.float64) / 255.0
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[frame] = img
        return img
