from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from hipgraf.imgio import BinaryMask

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def flood_fill_components(data: np.ndarray) -> list[set[tuple[int, int]]]:
    """8-connected components by BFS, as sets of (x, y)."""
    h, w = data.shape
    seen = np.zeros_like(data, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not data[y, x] or seen[y, x]:
                continue
            comp = set()
            q = deque([(x, y)])
            seen[y, x] = True
            while q:
                cx, cy = q.popleft()
                comp.add((cx, cy))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and data[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((nx, ny))
            comps.append(comp)
    return comps


def random_blob(rng: np.random.Generator, w: int = 64, h: int = 64,
                cx: float | None = None, cy: float | None = None) -> BinaryMask:
    """Star-convex blob with a smooth random radius profile."""
    cx = w / 2 if cx is None else cx
    cy = h / 2 if cy is None else cy
    base = rng.uniform(0.2, 0.35) * min(w, h)
    k = np.arange(1, 4)
    amp = rng.uniform(0, 0.15, size=3) * base
    ph = rng.uniform(0, 2 * np.pi, size=3)
    ys, xs = np.mgrid[0:h, 0:w]
    ang = np.arctan2(ys - cy, xs - cx)
    r = base + (amp[:, None, None] * np.cos(k[:, None, None] * ang + ph[:, None, None])).sum(0)
    return BinaryMask(np.hypot(xs - cx, ys - cy) <= r)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
