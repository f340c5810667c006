from typing import List, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from services.grading.schemas import FRACTION_TOLERANCE, VolumeProfile

# confusion rows and columns: benign, G3, G4, G5
NOISE_CLASSES = 4


class SynthSpec(BaseModel):
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    gland_count: int = Field(ge=0)
    target_profile: VolumeProfile
    # semi-axis length range in pixels, inclusive
    gland_size_range: Tuple[int, int] = (6, 14)
    seed: int = 0
    pixel_spacing: float = Field(default=0.96, gt=0.0)

    @field_validator("gland_size_range")
    def validate_size_range(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        low, high = v
        if low < 1 or high < low:
            raise ValueError("gland_size_range must satisfy 1 <= low <= high")
        return v


class NoiseModel(BaseModel):
    gland_confusion: List[List[float]]
    boundary_jitter: int = Field(default=0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def validate_confusion(self) -> "NoiseModel":
        rows = self.gland_confusion
        if len(rows) != NOISE_CLASSES or any(len(r) != NOISE_CLASSES for r in rows):
            raise ValueError("gland_confusion must be a 4x4 matrix")
        for row in rows:
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > FRACTION_TOLERANCE:
                raise ValueError("every gland_confusion row must be a probability distribution")
        return self

    @property
    def is_identity(self) -> bool:
        return self.boundary_jitter == 0 and all(
            self.gland_confusion[i][i] == 1.0 for i in range(NOISE_CLASSES)
        )

    @classmethod
    def identity(cls, seed: int = 0) -> "NoiseModel":
        return cls.symmetric(0.0, seed=seed)

    @classmethod
    def symmetric(cls, rate: float, boundary_jitter: int = 0, seed: int = 0) -> "NoiseModel":
        """Keep a gland's class with probability 1 - rate, else move to one of the other three."""
        off = rate / (NOISE_CLASSES - 1)
        rows = [
            [1.0 - rate if i == j else off for j in range(NOISE_CLASSES)]
            for i in range(NOISE_CLASSES)
        ]
        return cls(gland_confusion=rows, boundary_jitter=boundary_jitter, seed=seed)
