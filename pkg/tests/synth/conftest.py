import pytest

from services.grading.schemas import VolumeProfile
from services.synth.schemas import SynthSpec

# epithelial fractions (benign, G3, G4, G5) spanning benign to grade group 5
TARGETS = [
    (0.95, 0.05, 0.0, 0.0),
    (0.5, 0.5, 0.0, 0.0),
    (0.2, 0.48, 0.32, 0.0),
    (0.2, 0.32, 0.48, 0.0),
    (0.3, 0.0, 0.7, 0.0),
    (0.2, 0.0, 0.4, 0.4),
]


@pytest.fixture
def spec_of():
    """Factory for a 192x192 biopsy with 24 small glands aiming at the given fractions."""

    def make(target, seed: int = 0, gland_count: int = 24, size: int = 192) -> SynthSpec:
        benign, g3, g4, g5 = target
        return SynthSpec(
            width=size,
            height=size,
            gland_count=gland_count,
            target_profile=VolumeProfile(pct_benign=benign, pct_g3=g3, pct_g4=g4, pct_g5=g5),
            seed=seed,
            gland_size_range=(5, 10),
        )

    return make


@pytest.fixture
def targets():
    return TARGETS
