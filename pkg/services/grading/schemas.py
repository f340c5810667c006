from enum import Enum, IntEnum
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

FRACTION_TOLERANCE = 1e-9

# (primary, secondary) -> ISUP grade group
GRADE_GROUP_TABLE = {
    (3, 3): 1,
    (3, 4): 2,
    (4, 3): 3,
    (3, 5): 4,
    (5, 3): 4,
    (4, 4): 4,
    (4, 5): 5,
    (5, 4): 5,
    (5, 5): 5,
}


class GradeGroup(IntEnum):
    GG1 = 1
    GG2 = 2
    GG3 = 3
    GG4 = 4
    GG5 = 5


class GleasonScore(BaseModel):
    primary: int = Field(ge=3, le=5)
    secondary: int = Field(ge=3, le=5)
    tertiary: Optional[int] = Field(default=None, ge=3, le=5)

    @model_validator(mode="after")
    def validate_tertiary(self) -> "GleasonScore":
        if self.tertiary is not None and self.tertiary in (self.primary, self.secondary):
            raise ValueError("tertiary pattern must differ from primary and secondary")
        return self

    @property
    def is_pure(self) -> bool:
        return self.primary == self.secondary and self.tertiary is None

    @property
    def pattern_set(self) -> set[int]:
        grades = {self.primary, self.secondary}
        if self.tertiary is not None:
            grades.add(self.tertiary)
        return grades

    def __str__(self) -> str:
        return f"{self.primary}+{self.secondary}"

    class Config:
        frozen = True


class Verdict(BaseModel):
    """Benign, or malignant with a Gleason score and its grade group."""

    malignant: bool
    score: Optional[GleasonScore] = None
    grade_group: Optional[GradeGroup] = None

    @model_validator(mode="after")
    def validate_verdict(self) -> "Verdict":
        if not self.malignant:
            if self.score is not None or self.grade_group is not None:
                raise ValueError("a benign verdict carries no score")
            return self
        if self.score is None:
            raise ValueError("a malignant verdict needs a Gleason score")
        expected = GradeGroup(GRADE_GROUP_TABLE[(self.score.primary, self.score.secondary)])
        if self.grade_group is None:
            self.grade_group = expected
        elif self.grade_group != expected:
            raise ValueError(
                f"grade group {int(self.grade_group)} does not match score {self.score}"
            )
        return self

    @classmethod
    def benign(cls) -> "Verdict":
        return cls(malignant=False)

    @classmethod
    def of(cls, primary: int, secondary: int, tertiary: int | None = None) -> "Verdict":
        return cls(
            malignant=True,
            score=GleasonScore(primary=primary, secondary=secondary, tertiary=tertiary),
        )

    @property
    def grade_group_label(self) -> int:
        """Grade group with Benign as 0."""
        return int(self.grade_group) if self.malignant else 0


class VolumeProfile(BaseModel):
    pct_benign: float = Field(ge=0.0, le=1.0)
    pct_g3: float = Field(ge=0.0, le=1.0)
    pct_g4: float = Field(ge=0.0, le=1.0)
    pct_g5: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_total(self) -> "VolumeProfile":
        total = self.pct_benign + self.pct_g3 + self.pct_g4 + self.pct_g5
        if abs(total - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"fractions must sum to 1, got {total}")
        return self

    @property
    def tumor_fraction(self) -> float:
        return self.pct_g3 + self.pct_g4 + self.pct_g5

    def grade_fraction(self, grade: int) -> float:
        return {3: self.pct_g3, 4: self.pct_g4, 5: self.pct_g5}[grade]


class ScoringMode(str, Enum):
    BIOPSY_HIGHEST = "biopsy_highest"
    PROSTATECTOMY_MOST_COMMON = "prostatectomy_most_common"


class ThresholdProfile(BaseModel):
    tumor_threshold: float
    secondary_threshold: float
    tertiary_floor: float
    scoring_mode: ScoringMode

    @field_validator("tumor_threshold", "secondary_threshold", "tertiary_floor")
    def validate_fraction(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("thresholds are fractions in [0, 1]")
        return v

    @model_validator(mode="after")
    def validate_floor(self) -> "ThresholdProfile":
        if self.tertiary_floor > self.secondary_threshold:
            raise ValueError("tertiary_floor must not exceed secondary_threshold")
        return self


class RiskScores(BaseModel):
    malignancy_score: float = Field(ge=0.0, le=1.0)
    aggressiveness_score: float = Field(ge=0.0, le=1.0)


class Diagnosis(BaseModel):
    verdict: Verdict
    tumor_fraction: float = Field(ge=0.0, le=1.0)
    risk_scores: RiskScores


class DiagnoseRequest(BaseModel):
    profile: VolumeProfile
    profile_name: str = "biopsy"


class MaskDiagnosisOut(BaseModel):
    case_id: str
    volume_profile: VolumeProfile
    diagnosis: Diagnosis
