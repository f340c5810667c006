from enum import IntEnum
from typing import Dict, Tuple
from pydantic import BaseModel, field_validator, model_validator


class TissueClass(IntEnum):
    BACKGROUND = 0
    NON_EPITHELIAL_TISSUE = 1
    BENIGN_EPITHELIUM = 2
    GLEASON_3 = 3
    GLEASON_4 = 4
    GLEASON_5 = 5
    HARD_NEGATIVE = 6


MAX_CLASS_CODE = max(TissueClass)
EPITHELIAL_CLASSES = (
    TissueClass.BENIGN_EPITHELIUM,
    TissueClass.GLEASON_3,
    TissueClass.GLEASON_4,
    TissueClass.GLEASON_5,
)
TUMOR_CLASSES = (TissueClass.GLEASON_3, TissueClass.GLEASON_4, TissueClass.GLEASON_5)
# Background and non-epithelial tissue are never componentized.
COMPONENT_CLASSES = EPITHELIAL_CLASSES + (TissueClass.HARD_NEGATIVE,)


class ClassAreas(BaseModel):
    counts: Dict[TissueClass, int]

    @field_validator("counts")
    def validate_counts(cls, v: Dict[TissueClass, int]) -> Dict[TissueClass, int]:
        filled = {c: 0 for c in TissueClass}
        for c, n in v.items():
            if n < 0:
                raise ValueError("pixel counts must be non-negative")
            filled[TissueClass(c)] = int(n)
        return filled

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, tissue_class: TissueClass) -> int:
        return self.counts[TissueClass(tissue_class)]

    def scaled(self, factor: int) -> "ClassAreas":
        return ClassAreas(counts={c: n * factor for c, n in self.counts.items()})


class Component(BaseModel):
    id: int
    class_: TissueClass
    pixel_count: int
    # (x0, y0, x1, y1), inclusive
    bounding_box: Tuple[int, int, int, int]
    class_counts: Dict[TissueClass, int]

    @model_validator(mode="after")
    def validate_component(self) -> "Component":
        if self.pixel_count < 1:
            raise ValueError("a component holds at least one pixel")
        x0, y0, x1, y1 = self.bounding_box
        if x0 > x1 or y0 > y1:
            raise ValueError("bounding_box corners are out of order")
        if sum(self.class_counts.values()) != self.pixel_count:
            raise ValueError("class_counts must add up to pixel_count")
        return self
