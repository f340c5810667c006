"""
2026 Module responsible for ground-truthed synthetic biopsies and a noisy
segmenter stand-in.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from services.exceptions import NoEpithelium, PlacementOverflow, ProfileUnrealizable
from services.grading.schemas import Diagnosis, ThresholdProfile
from services.grading.service import PROFILES, grade_mask
from services.raster.mask import LabelMask, encode_mask
from services.raster.schemas import TissueClass
from services.raster.service import component_labels, connected_components
from services.rng import stream
from services.synth.schemas import NoiseModel, SynthSpec

logger = logging.getLogger(__name__)

PLACEMENT_ATTEMPTS_PER_GLAND = 200
PROFILE_TOLERANCE = 0.02
LAYOUT_ATTEMPTS = 8
# tissue occupies this share of rows, centred vertically
TISSUE_BAND = (0.1, 0.9)

_STROMA = int(TissueClass.NON_EPITHELIAL_TISSUE)
_BENIGN = int(TissueClass.BENIGN_EPITHELIUM)
_RING = ndimage.generate_binary_structure(2, 2)

Gland = Tuple[int, int, np.ndarray]


def _ellipse(a: int, b: int, angle: float) -> np.ndarray:
    r = max(a, b)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _place_glands(spec: SynthSpec, rng: np.random.Generator, top: int, bottom: int) -> List[Gland]:
    """Rejection-sample non-touching ellipses inside rows [top, bottom)."""
    occupied = np.zeros((spec.height, spec.width), dtype=bool)
    glands: List[Gland] = []
    low, high = spec.gland_size_range
    budget = spec.gland_count * PLACEMENT_ATTEMPTS_PER_GLAND
    attempts = 0
    while len(glands) < spec.gland_count:
        attempts += 1
        if attempts > budget:
            raise PlacementOverflow(
                f"placed {len(glands)} of {spec.gland_count} glands in {budget} attempts"
            )
        a, b = (int(v) for v in rng.integers(low, high + 1, size=2))
        shape = _ellipse(a, b, float(rng.uniform(0.0, np.pi)))
        r = shape.shape[0] // 2
        if bottom - top < 2 * r + 1 or spec.width < 2 * r + 1:
            continue
        cy = int(rng.integers(top + r, bottom - r))
        cx = int(rng.integers(r, spec.width - r))
        y0, x0 = cy - r, cx - r
        window = occupied[y0 : y0 + shape.shape[0], x0 : x0 + shape.shape[1]]
        if (window & shape).any():
            continue
        # keep a one-pixel gap so glands never touch, even diagonally
        grown = ndimage.binary_dilation(np.pad(shape, 1), structure=_RING)
        gy0, gx0 = y0 - 1, x0 - 1
        sy0, sx0 = max(gy0, 0), max(gx0, 0)
        sy1 = min(gy0 + grown.shape[0], spec.height)
        sx1 = min(gx0 + grown.shape[1], spec.width)
        occupied[sy0:sy1, sx0:sx1] |= grown[sy0 - gy0 : sy1 - gy0, sx0 - gx0 : sx1 - gx0]
        glands.append((y0, x0, shape))
    return glands


def _assign_classes(sizes: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    Largest gland first, each to the class furthest below its target area,
    then single moves and pairwise swaps while they shrink the worst miss.
    Classes with a zero target never receive a gland.
    """
    total = sizes.sum()
    assigned = np.zeros(len(target))
    classes = np.zeros(len(sizes), dtype=np.int64)
    for i in np.argsort(-sizes, kind="stable"):
        deficit = target * total - assigned
        c = int(np.argmax(deficit))
        classes[i] = c
        assigned[c] += sizes[i]

    def miss(area: np.ndarray) -> float:
        return float(np.max(np.abs(area / total - target)))

    allowed = np.flatnonzero(target > 0)
    best = miss(assigned)
    improved = True
    while improved:
        improved = False
        for i in range(len(sizes)):
            for c in allowed:
                if c == classes[i]:
                    continue
                trial = assigned.copy()
                trial[classes[i]] -= sizes[i]
                trial[c] += sizes[i]
                if miss(trial) < best - 1e-12:
                    assigned, best, classes[i], improved = trial, miss(trial), c, True
        for i in range(len(sizes)):
            for j in range(i + 1, len(sizes)):
                ci, cj = classes[i], classes[j]
                if ci == cj or sizes[i] == sizes[j]:
                    continue
                trial = assigned.copy()
                trial[ci] += sizes[j] - sizes[i]
                trial[cj] += sizes[i] - sizes[j]
                if miss(trial) < best - 1e-12:
                    assigned, best, improved = trial, miss(trial), True
                    classes[i], classes[j] = cj, ci
    return classes


def generate(
    spec: SynthSpec, profile: Optional[ThresholdProfile] = None
) -> Tuple[LabelMask, Optional[Diagnosis]]:
    """
    Draw a synthetic biopsy.
    :param spec: Geometry, gland count, target epithelial profile and seed.
    :param profile: Grading profile for the ground truth; biopsy by default.
    :return: The mask and its ground-truth diagnosis (None without glands).
    :raises: PlacementOverflow, ProfileUnrealizable when no layout brings the
        realized fractions within 0.02 of the target.
    """
    profile = profile or PROFILES["biopsy"]
    top = int(spec.height * TISSUE_BAND[0])
    bottom = max(top + 1, int(round(spec.height * TISSUE_BAND[1])))
    p = spec.target_profile
    target = np.array([p.pct_benign, p.pct_g3, p.pct_g4, p.pct_g5])

    for layout in range(LAYOUT_ATTEMPTS):
        raster = np.zeros((spec.height, spec.width), dtype=np.uint8)
        raster[top:bottom] = _STROMA
        glands = _place_glands(spec, stream(spec.seed, layout), top, bottom)
        if not glands:
            break
        sizes = np.array([int(shape.sum()) for _, _, shape in glands])
        classes = _assign_classes(sizes, target)
        realized = np.bincount(classes, weights=sizes, minlength=4) / sizes.sum()
        miss = float(np.max(np.abs(realized - target)))
        if miss <= PROFILE_TOLERANCE:
            for (y0, x0, shape), c in zip(glands, classes):
                h, w = shape.shape
                region = raster[y0 : y0 + h, x0 : x0 + w]
                region[shape] = _BENIGN + c
            break
        logger.debug(f"Layout {layout} for seed {spec.seed} misses the target by {miss:.4f}")
    else:
        raise ProfileUnrealizable(
            f"{LAYOUT_ATTEMPTS} layouts of {spec.gland_count} glands miss the target profile; "
            f"last realized {np.round(realized, 4).tolist()}"
        )

    m = encode_mask(raster, spec.pixel_spacing)
    try:
        truth = grade_mask(m, profile)
    except NoEpithelium:
        truth = None
    logger.debug(f"Generated {len(glands)} glands for seed {spec.seed}")
    return m, truth


def _jitter(
    raster: np.ndarray, member: np.ndarray, box: Tuple[int, int, int, int], step: int
) -> None:
    x0, y0, x1, y1 = box
    pad = abs(step) + 1
    sy0, sx0 = max(y0 - pad, 0), max(x0 - pad, 0)
    sy1, sx1 = min(y1 + pad + 1, raster.shape[0]), min(x1 + pad + 1, raster.shape[1])
    region = raster[sy0:sy1, sx0:sx1]
    inside = member[sy0:sy1, sx0:sx1]
    cls = region[inside][0]
    if step > 0:
        grown = ndimage.binary_dilation(inside, iterations=step)
        region[grown & ~inside & (region == _STROMA)] = cls
    else:
        kept = ndimage.binary_erosion(inside, iterations=-step, border_value=1)
        region[inside & ~kept] = _STROMA


def corrupt(m: LabelMask, noise: NoiseModel) -> LabelMask:
    """
    Imitate an imperfect segmenter.
    Each gland (8-connected epithelium) draws a new class from its
    confusion row, then grows into the surrounding stroma or shrinks by up to
    ``boundary_jitter`` pixels.
    Hard-negative glands are left alone.
    """
    if noise.is_identity:
        return m
    rng = stream(noise.seed, 0)
    raster = m.decode().copy()
    labels = component_labels(m, connectivity=8, by_class=False)
    glands = connected_components(m, connectivity=8, by_class=False)
    confusion = np.asarray(noise.gland_confusion)
    flipped = 0
    for gland in glands:
        if gland.class_ == TissueClass.HARD_NEGATIVE:
            continue
        member = labels == gland.id
        current = int(gland.class_) - _BENIGN
        drawn = int(rng.choice(4, p=confusion[current]))
        if drawn != current:
            raster[member] = _BENIGN + drawn
            flipped += 1
        if noise.boundary_jitter:
            step = int(rng.integers(-noise.boundary_jitter, noise.boundary_jitter + 1))
            if step:
                _jitter(raster, member, gland.bounding_box, step)
    logger.debug(f"Corrupted {flipped} of {len(glands)} glands")
    return encode_mask(raster, m.pixel_spacing)
