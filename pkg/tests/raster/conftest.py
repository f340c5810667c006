from collections import deque

import numpy as np
import pytest

from services.raster.mask import encode_mask

COMPONENTIZED = (2, 3, 4, 5, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20260401)


@pytest.fixture
def random_grid(rng):
    """Factory for random class grids biased towards large same-class blobs."""

    def make(height: int, width: int, classes=tuple(range(7))) -> np.ndarray:
        coarse = rng.choice(classes, size=(max(1, height // 3 + 1), max(1, width // 3 + 1)))
        grid = np.kron(coarse, np.ones((3, 3), dtype=coarse.dtype))[:height, :width]
        noise = rng.random((height, width)) < 0.15
        grid[noise] = rng.choice(classes, size=int(noise.sum()))
        return grid.astype(np.uint8)

    return make


@pytest.fixture
def glands_mask():
    """Two glands on stroma: a mixed 3/4 gland on the left, a pure 5 gland on the right."""
    grid = np.array(
        [
            [1, 1, 1, 1, 1, 1, 1, 1],
            [1, 3, 3, 4, 1, 5, 5, 1],
            [1, 3, 4, 4, 1, 5, 5, 1],
            [1, 3, 3, 3, 1, 1, 1, 1],
            [0, 0, 0, 0, 0, 0, 0, 0],
        ]
    )
    return encode_mask(grid, 0.96)


def flood_fill_components(grid: np.ndarray, connectivity: int, by_class: bool = True):
    """Plain breadth-first flood fill, scanning seeds in row-major order."""
    height, width = grid.shape
    seen = np.zeros_like(grid, dtype=bool)
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    found = []
    for y in range(height):
        for x in range(width):
            if seen[y, x] or grid[y, x] not in COMPONENTIZED:
                continue
            seed_class = grid[y, x]
            pixels = []
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                pixels.append((cy, cx))
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if not (0 <= ny < height and 0 <= nx < width) or seen[ny, nx]:
                        continue
                    value = grid[ny, nx]
                    joins = value == seed_class if by_class else value in COMPONENTIZED
                    if joins:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            found.append(pixels)
    return found


@pytest.fixture
def flood_fill():
    return flood_fill_components
