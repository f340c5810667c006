"""
2026 Module responsible for semi-automatic training labels: composing
upstream masks under the report's score, refining mixed-score glands and
mining hard negatives.
"""
import logging
from typing import Mapping

import numpy as np

from services.exceptions import (
    CaseSetMismatch,
    DegenerateMarginals,
    MissingSegmenterOutput,
    MixedScoreUnsupported,
    NotANegativeCase,
)
from services.grading.schemas import Verdict
from services.grading.service import gleason_score_label
from services.labelgen.schemas import LabelQuality, ReportLabel, UpstreamMasks
from services.raster.mask import LabelMask
from services.raster.schemas import TissueClass, TUMOR_CLASSES
from services.raster.service import connected_components, map_bands, relabel_components
from services.stats.schemas import GLEASON_SCORE_SCALE, GRADE_GROUP_SCALE
from services.stats.service import accuracy, quadratic_kappa

logger = logging.getLogger(__name__)

_BACKGROUND = int(TissueClass.BACKGROUND)
_STROMA = int(TissueClass.NON_EPITHELIAL_TISSUE)
_BENIGN = int(TissueClass.BENIGN_EPITHELIUM)
_HARD_NEGATIVE = int(TissueClass.HARD_NEGATIVE)
_GRADES = np.array([int(c) for c in TUMOR_CLASSES])


def _structure(tissue: np.ndarray, epithelium: np.ndarray) -> np.ndarray:
    """Benign epithelium, non-epithelial tissue or background per pixel."""
    out = np.where(tissue != 0, _STROMA, _BACKGROUND).astype(np.uint8)
    out[epithelium != 0] = _BENIGN
    return out


def compose_pure(u: UpstreamMasks, r: ReportLabel, tile_rows: int | None = None) -> LabelMask:
    """
    Label a negative or pure-score biopsy from the upstream masks.
    :param u: Tissue, tumor and epithelium masks.
    :param r: Negative or a pure score (3+3, 4+4, 5+5).
    :return: Epithelium under tumor carries the report's grade, other
        epithelium is benign, other tissue non-epithelial.
    :raises: MixedScoreUnsupported for mixed scores.
    """
    if r.is_negative:
        grade = None
    elif r.verdict.score.is_pure:
        grade = r.verdict.score.primary
    else:
        raise MixedScoreUnsupported(
            f"Case {r.case_id}: score {r.verdict.score} is not pure"
        )

    def combine(tissue: np.ndarray, tumor: np.ndarray, epithelium: np.ndarray) -> np.ndarray:
        out = _structure(tissue, epithelium)
        if grade is not None:
            out[(epithelium != 0) & (tumor != 0)] = grade
        return out

    return map_bands(combine, u.tissue, u.tumor, u.epithelium, tile_rows=tile_rows)


def _nearest_reported(grade: int, reported: set[int]) -> int:
    return min(reported, key=lambda g: (abs(g - grade), g))


def refine_mixed(
    u: UpstreamMasks, r: ReportLabel, connectivity: int = 4, tile_rows: int | None = None
) -> LabelMask:
    """
    Constrain the segmenter's output to the grades the report names.
    Every gland (connected epithelial region) gets one class by majority
    vote; a gland voted to a grade the report does not name moves to the
    nearest reported grade, the lower one on a tie.
    :raises: MissingSegmenterOutput, MixedScoreUnsupported for negative reports.
    """
    if u.segmenter_output is None:
        raise MissingSegmenterOutput(f"Case {r.case_id}: refinement needs segmenter output")
    if r.is_negative:
        raise MixedScoreUnsupported(f"Case {r.case_id}: refinement needs a Gleason score")
    reported = r.verdict.score.pattern_set

    def combine(tissue: np.ndarray, epithelium: np.ndarray, predicted: np.ndarray) -> np.ndarray:
        out = _structure(tissue, epithelium)
        graded = (epithelium != 0) & np.isin(predicted, _GRADES)
        out[graded] = predicted[graded]
        return out

    labels = map_bands(
        combine, u.tissue, u.epithelium, u.segmenter_output, tile_rows=tile_rows
    )
    glands = connected_components(
        labels, connectivity=connectivity, by_class=False, tile_rows=tile_rows
    )
    assignment = {}
    moved = 0
    for gland in glands:
        cls = gland.class_
        if cls in TUMOR_CLASSES and int(cls) not in reported:
            cls = TissueClass(_nearest_reported(int(cls), reported))
            moved += 1
        assignment[gland.id] = cls
    logger.info(f"Case {r.case_id}: {len(glands)} glands, {moved} moved to a reported grade")
    return relabel_components(
        labels, assignment, connectivity=connectivity, by_class=False, tile_rows=tile_rows
    )


def mine_hard_negatives(
    u: UpstreamMasks, r: ReportLabel, tile_rows: int | None = None
) -> LabelMask:
    """
    Relabel epithelium that the segmenter called tumor in a negative biopsy.
    :raises: NotANegativeCase, MissingSegmenterOutput.
    """
    if not r.is_negative:
        raise NotANegativeCase(f"Case {r.case_id} is reported as {r.verdict.score}")
    if u.segmenter_output is None:
        raise MissingSegmenterOutput(f"Case {r.case_id}: mining needs segmenter output")

    def combine(tissue: np.ndarray, epithelium: np.ndarray, predicted: np.ndarray) -> np.ndarray:
        out = _structure(tissue, epithelium)
        out[(epithelium != 0) & np.isin(predicted, _GRADES)] = _HARD_NEGATIVE
        return out

    return map_bands(
        combine, u.tissue, u.epithelium, u.segmenter_output, tile_rows=tile_rows
    )


def _kappa_or_none(ref: list[int], pred: list[int], scale) -> float | None:
    try:
        return quadratic_kappa(ref, pred, scale)
    except DegenerateMarginals:
        return None


def label_quality(
    auto: Mapping[str, Verdict], reference: Mapping[str, Verdict]
) -> LabelQuality:
    """
    Agreement of report-derived labels with a reference standard.
    :param auto: Case id to the verdict taken from the report.
    :param reference: Case id to the reference verdict.
    :return: Accuracy and quadratic kappa on Gleason score and on grade group;
        a kappa is None when it is undefined.
    :raises: CaseSetMismatch if the case sets differ.
    """
    if set(auto) != set(reference):
        missing = sorted(set(auto) ^ set(reference))
        raise CaseSetMismatch(f"Case sets differ on {len(missing)} cases: {missing[:10]}")
    cases = sorted(auto)
    ref_scores = [gleason_score_label(reference[c]) for c in cases]
    auto_scores = [gleason_score_label(auto[c]) for c in cases]
    ref_groups = [reference[c].grade_group_label for c in cases]
    auto_groups = [auto[c].grade_group_label for c in cases]
    return LabelQuality(
        cases=len(cases),
        score_accuracy=accuracy(ref_scores, auto_scores),
        score_kappa=_kappa_or_none(ref_scores, auto_scores, GLEASON_SCORE_SCALE),
        grade_group_accuracy=accuracy(ref_groups, auto_groups),
        grade_group_kappa=_kappa_or_none(ref_groups, auto_groups, GRADE_GROUP_SCALE),
    )
