"""
2026 Module responsible for turning class areas into a Gleason score and
grade group under a clinical threshold profile.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from services.exceptions import NoEpithelium, UnknownProfile
from services.grading.schemas import (
    FRACTION_TOLERANCE,
    GRADE_GROUP_TABLE,
    Diagnosis,
    GleasonScore,
    GradeGroup,
    RiskScores,
    ScoringMode,
    ThresholdProfile,
    Verdict,
    VolumeProfile,
)
from services.raster.mask import LabelMask
from services.raster.schemas import ClassAreas, TissueClass
from services.raster.service import class_areas

logger = logging.getLogger(__name__)

PROFILES = {
    "biopsy": ThresholdProfile(
        tumor_threshold=0.10,
        secondary_threshold=0.07,
        tertiary_floor=0.01,
        scoring_mode=ScoringMode.BIOPSY_HIGHEST,
    ),
    "tma": ThresholdProfile(
        tumor_threshold=0.01,
        secondary_threshold=0.02,
        tertiary_floor=0.0,
        scoring_mode=ScoringMode.PROSTATECTOMY_MOST_COMMON,
    ),
}

# Gleason-score ordinal scale, Benign first.
SCORE_LABELS = ["benign", "3+3", "3+4", "4+3", "3+5", "4+4", "5+3", "4+5", "5+4", "5+5"]


def load_profile(name_or_path: str | Path) -> ThresholdProfile:
    """
    Resolve a shipped profile name or a JSON profile file.
    :param name_or_path: ``biopsy``, ``tma`` or a path to a JSON file.
    :return: The validated profile.
    :raises: UnknownProfile if neither a shipped name nor a readable valid file.
    """
    key = str(name_or_path)
    if key in PROFILES:
        return PROFILES[key]
    path = Path(key)
    if not path.is_file():
        raise UnknownProfile(f"Unknown threshold profile: {key}")
    try:
        return ThresholdProfile.model_validate(json.loads(path.read_text()))
    except (ValueError, ValidationError) as e:
        raise UnknownProfile(f"Invalid threshold profile {key}: {e}") from e


def volume_profile(areas: ClassAreas) -> VolumeProfile:
    """
    Normalize grade areas over epithelium only.
    :param areas: Pixel counts per class.
    :return: Fractions of benign, G3, G4 and G5 epithelium.
    :raises: NoEpithelium if the mask holds no epithelial pixel.
    """
    benign = areas[TissueClass.BENIGN_EPITHELIUM]
    g3 = areas[TissueClass.GLEASON_3]
    g4 = areas[TissueClass.GLEASON_4]
    g5 = areas[TissueClass.GLEASON_5]
    epithelium = benign + g3 + g4 + g5
    if epithelium == 0:
        raise NoEpithelium("Mask contains no epithelium; it cannot be graded")
    return VolumeProfile(
        pct_benign=benign / epithelium,
        pct_g3=g3 / epithelium,
        pct_g4=g4 / epithelium,
        pct_g5=g5 / epithelium,
    )


def score_to_grade_group(s: GleasonScore) -> GradeGroup:
    return GradeGroup(GRADE_GROUP_TABLE[(s.primary, s.secondary)])


def gleason_score_label(verdict: Verdict) -> int:
    """Position on the Gleason-score ordinal scale (0 = benign); tertiary is ignored."""
    if not verdict.malignant:
        return 0
    return SCORE_LABELS.index(str(verdict.score))


def _reaches(fraction: float, threshold: float) -> bool:
    return fraction >= threshold - FRACTION_TOLERANCE


def _ranked_grades(p: VolumeProfile) -> List[Tuple[int, float]]:
    present = [(g, p.grade_fraction(g)) for g in (3, 4, 5) if p.grade_fraction(g) > 0.0]
    # larger fraction first; equal fractions put the higher grade first
    return sorted(present, key=lambda item: (-item[1], -item[0]))


def _biopsy_score(ranked: List[Tuple[int, float]], profile: ThresholdProfile) -> GleasonScore:
    primary = ranked[0][0]
    if len(ranked) < 2 or not _reaches(ranked[1][1], profile.secondary_threshold):
        return GleasonScore(primary=primary, secondary=primary)
    secondary = ranked[1][0]
    if len(ranked) > 2:
        grade, fraction = ranked[2]
        if grade > secondary and _reaches(fraction, profile.tertiary_floor):
            secondary = grade
    return GleasonScore(primary=primary, secondary=secondary)


def _prostatectomy_score(
    ranked: List[Tuple[int, float]], profile: ThresholdProfile
) -> GleasonScore:
    primary = ranked[0][0]
    secondary = primary
    if len(ranked) > 1 and _reaches(ranked[1][1], profile.secondary_threshold):
        secondary = ranked[1][0]
    tertiary: Optional[int] = None
    for grade, fraction in ranked:
        if grade > max(primary, secondary) and _reaches(fraction, profile.tertiary_floor):
            tertiary = grade if tertiary is None else max(tertiary, grade)
    return GleasonScore(primary=primary, secondary=secondary, tertiary=tertiary)


def diagnose(p: VolumeProfile, profile: ThresholdProfile) -> Diagnosis:
    """
    Apply the threshold rules of ``profile`` to a volume profile.
    :param p: Epithelial fractions.
    :param profile: Thresholds and scoring mode.
    :return: Verdict, tumor fraction and the continuous risk scores.
    """
    tumor = min(1.0, p.tumor_fraction)
    risk = RiskScores(
        malignancy_score=tumor,
        aggressiveness_score=min(1.0, p.pct_g4 + p.pct_g5),
    )
    if not _reaches(tumor, profile.tumor_threshold) or tumor == 0.0:
        return Diagnosis(verdict=Verdict.benign(), tumor_fraction=tumor, risk_scores=risk)
    ranked = _ranked_grades(p)
    if profile.scoring_mode == ScoringMode.BIOPSY_HIGHEST:
        score = _biopsy_score(ranked, profile)
    else:
        score = _prostatectomy_score(ranked, profile)
    verdict = Verdict(malignant=True, score=score, grade_group=score_to_grade_group(score))
    return Diagnosis(verdict=verdict, tumor_fraction=tumor, risk_scores=risk)


def grade_mask(
    m: LabelMask, profile: ThresholdProfile, tile_rows: int | None = None
) -> Diagnosis:
    """
    Grade a label mask end to end.
    :raises: NoEpithelium for masks without epithelium.
    """
    return diagnose(volume_profile(class_areas(m, tile_rows=tile_rows)), profile)
