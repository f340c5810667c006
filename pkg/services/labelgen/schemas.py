from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator

from services.exceptions import ShapeMismatch
from services.grading.schemas import Verdict
from services.raster.mask import LabelMask


class ReportLabel(BaseModel):
    """Label taken from a pathology report: negative, or a Gleason score."""

    case_id: str
    verdict: Verdict

    @property
    def is_negative(self) -> bool:
        return not self.verdict.malignant


class UpstreamMasks(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    # tissue, tumor and epithelium are binary: any non-zero pixel is set
    tissue: LabelMask
    tumor: LabelMask
    epithelium: LabelMask
    segmenter_output: Optional[LabelMask] = None

    @model_validator(mode="after")
    def validate_shapes(self) -> "UpstreamMasks":
        masks = [self.tissue, self.tumor, self.epithelium]
        if self.segmenter_output is not None:
            masks.append(self.segmenter_output)
        if any(not masks[0].same_shape(m) for m in masks[1:]):
            raise ShapeMismatch("upstream masks must share one shape")
        return self


class LabelQuality(BaseModel):
    cases: int
    score_accuracy: float
    score_kappa: Optional[float]
    grade_group_accuracy: float
    grade_group_kappa: Optional[float]
