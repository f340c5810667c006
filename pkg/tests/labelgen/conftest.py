import numpy as np
import pytest

from services.grading.schemas import Verdict
from services.labelgen.schemas import ReportLabel, UpstreamMasks
from services.raster.mask import LabelMask, encode_mask


def binary(grid) -> LabelMask:
    return encode_mask(np.asarray(grid, dtype=np.uint8), 0.96)


@pytest.fixture
def upstream():
    """
    4x6 biopsy: tissue everywhere but the last row, epithelium in two glands,
    the tumor detector firing on the left half.
    """
    tissue = [[1] * 6, [1] * 6, [1] * 6, [0] * 6]
    epithelium = [
        [1, 1, 0, 0, 1, 1],
        [1, 1, 0, 0, 1, 1],
        [0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0],
    ]
    tumor = [[1, 1, 1, 0, 0, 0], [1, 1, 1, 0, 0, 0], [0] * 6, [0] * 6]
    segmenter = [
        [3, 3, 1, 1, 5, 5],
        [3, 4, 1, 1, 5, 2],
        [1, 1, 1, 1, 1, 1],
        [0, 0, 0, 0, 0, 0],
    ]
    return UpstreamMasks(
        tissue=binary(tissue),
        tumor=binary(tumor),
        epithelium=binary(epithelium),
        segmenter_output=binary(segmenter),
    )


@pytest.fixture
def report():
    def make(case_id: str, primary: int | None = None, secondary: int | None = None, tertiary=None):
        verdict = Verdict.benign() if primary is None else Verdict.of(primary, secondary, tertiary)
        return ReportLabel(case_id=case_id, verdict=verdict)

    return make


@pytest.fixture
def random_upstream():
    """Factory of random upstream masks with blob-shaped epithelium and noisy segmenter grades."""

    def make(rng: np.random.Generator, height: int = 30, width: int = 40) -> UpstreamMasks:
        def blobs(p: float) -> np.ndarray:
            coarse = rng.random((height // 3 + 1, width // 3 + 1)) < p
            return np.kron(coarse, np.ones((3, 3), dtype=bool))[:height, :width]

        tissue = blobs(0.85)
        epithelium = tissue & blobs(0.5)
        tumor = blobs(0.5)
        segmenter = np.where(epithelium, rng.choice([2, 3, 4, 5], size=(height, width)), 1)
        segmenter = np.where(tissue, segmenter, 0)
        return UpstreamMasks(
            tissue=binary(tissue),
            tumor=binary(tumor),
            epithelium=binary(epithelium),
            segmenter_output=binary(segmenter),
        )

    return make
