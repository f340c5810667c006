from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, field_validator


class OrdinalScale(BaseModel):
    name: str
    categories: List[str]

    @field_validator("categories")
    def validate_categories(cls, v: List[str]) -> List[str]:
        if len(v) < 2:
            raise ValueError("an ordinal scale needs at least two categories")
        if len(set(v)) != len(v):
            raise ValueError("categories must be distinct")
        return v

    @property
    def k(self) -> int:
        return len(self.categories)


GRADE_GROUP_SCALE = OrdinalScale(
    name="grade_group", categories=["benign", "GG1", "GG2", "GG3", "GG4", "GG5"]
)
GLEASON_SCORE_SCALE = OrdinalScale(
    name="gleason_score",
    categories=["benign", "3+3", "3+4", "4+3", "3+5", "4+4", "5+3", "4+5", "5+4", "5+5"],
)
BINARY_SCALE = OrdinalScale(name="binary", categories=["negative", "positive"])


class KappaWeights(str, Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    NONE = "none"


class ConfusionMatrix(BaseModel):
    scale: OrdinalScale
    # rows are the reference, columns the prediction
    counts: List[List[int]]

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


class RocPoint(BaseModel):
    threshold: float
    sensitivity: float
    false_positive_rate: float

    @property
    def specificity(self) -> float:
        return 1.0 - self.false_positive_rate


class RocCurve(BaseModel):
    """Points ordered by rising threshold; the last threshold is +inf."""

    points: List[RocPoint]
    auc: float
    positives: int
    negatives: int


class BootstrapRoc(BaseModel):
    replicates: int
    seed: int
    ci_level: float
    auc: float
    auc_mean: float
    auc_lower: float
    auc_upper: float
    fpr_grid: List[float]
    tpr_mean: List[float]
    tpr_lower: List[float]
    tpr_upper: List[float]


class OperatingPoint(BaseModel):
    threshold: float
    sensitivity: float
    specificity: float


class PermutationStatistic(str, Enum):
    KAPPA_VS_MEDIAN = "kappa_vs_median"
    ACCURACY_VS_MEDIAN = "accuracy_vs_median"
    F1_VS_MEDIAN = "f1_vs_median"


class PermutationResult(BaseModel):
    statistic: PermutationStatistic
    observed_statistic: float
    null_samples: int
    p_two_tailed: float
    seed: int
    readers: int


class PairwiseKappa(BaseModel):
    rater_ids: List[str]
    # None where marginals are degenerate or on the diagonal
    matrix: List[List[Optional[float]]]
    median: Dict[str, Optional[float]]

    @property
    def mean_pairwise(self) -> Optional[float]:
        values = [
            v
            for i, row in enumerate(self.matrix)
            for j, v in enumerate(row)
            if j > i and v is not None
        ]
        return float(np.mean(values)) if values else None
