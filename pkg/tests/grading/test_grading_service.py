import json

import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from services.exceptions import NoEpithelium, UnknownProfile
from services.grading.schemas import (
    GleasonScore,
    GradeGroup,
    ScoringMode,
    ThresholdProfile,
    Verdict,
    VolumeProfile,
)
from services.grading.service import (
    PROFILES,
    diagnose,
    gleason_score_label,
    grade_mask,
    load_profile,
    score_to_grade_group,
    volume_profile,
)
from services.raster.mask import encode_mask
from services.raster.schemas import ClassAreas, TissueClass
from services.raster.service import class_areas

epithelial_counts = st.tuples(
    st.integers(0, 5000), st.integers(0, 5000), st.integers(0, 5000), st.integers(0, 5000)
).filter(lambda counts: sum(counts) > 0)


def areas_of(benign: int, g3: int, g4: int, g5: int, background: int = 0) -> ClassAreas:
    return ClassAreas(
        counts={
            TissueClass.BACKGROUND: background,
            TissueClass.BENIGN_EPITHELIUM: benign,
            TissueClass.GLEASON_3: g3,
            TissueClass.GLEASON_4: g4,
            TissueClass.GLEASON_5: g5,
        }
    )


def test_volume_profile_normalizes_over_epithelium():
    p = volume_profile(areas_of(50, 30, 20, 0))

    assert (p.pct_benign, p.pct_g3, p.pct_g4, p.pct_g5) == (0.5, 0.3, 0.2, 0.0)


def test_volume_profile_excludes_background_and_hard_negatives():
    areas = areas_of(10, 0, 0, 0, background=990)
    areas.counts[TissueClass.HARD_NEGATIVE] = 40

    p = volume_profile(areas)

    assert (p.pct_benign, p.pct_g3, p.pct_g4, p.pct_g5) == (1.0, 0.0, 0.0, 0.0)


def test_volume_profile_without_epithelium():
    with pytest.raises(NoEpithelium):
        volume_profile(areas_of(0, 0, 0, 0, background=100))


@pytest.mark.parametrize(
    "primary,secondary,expected",
    [
        (3, 3, 1),
        (3, 4, 2),
        (4, 3, 3),
        (3, 5, 4),
        (5, 3, 4),
        (4, 4, 4),
        (4, 5, 5),
        (5, 4, 5),
        (5, 5, 5),
    ],
)
def test_score_to_grade_group_table(primary, secondary, expected):
    assert score_to_grade_group(GleasonScore(primary=primary, secondary=secondary)) == expected


def test_grade_group_ignores_tertiary():
    assert score_to_grade_group(GleasonScore(primary=3, secondary=3, tertiary=5)) == GradeGroup.GG1


@pytest.mark.parametrize(
    "fractions,expected",
    [
        ((0.95, 0.05, 0.0, 0.0), None),
        ((0.20, 0.48, 0.32, 0.0), (3, 4, 2)),
        ((0.05, 0.90, 0.05, 0.0), (3, 3, 1)),
        ((0.00, 0.55, 0.42, 0.03), (3, 5, 4)),
    ],
)
def test_diagnose_biopsy_examples(biopsy, profile_of, fractions, expected):
    diagnosis = diagnose(profile_of(*fractions), biopsy)

    if expected is None:
        assert not diagnosis.verdict.malignant
        assert diagnosis.tumor_fraction == pytest.approx(0.05)
    else:
        score = diagnosis.verdict.score
        assert (score.primary, score.secondary, int(diagnosis.verdict.grade_group)) == expected


def test_diagnose_tma_example(tma, profile_of):
    diagnosis = diagnose(profile_of(0.985, 0.005, 0.01, 0.0), tma)

    assert str(diagnosis.verdict.score) == "4+4"
    assert diagnosis.verdict.grade_group == GradeGroup.GG4


def test_prostatectomy_reports_tertiary_without_substituting(tma, profile_of):
    diagnosis = diagnose(profile_of(0.2, 0.5, 0.25, 0.05), tma)

    assert str(diagnosis.verdict.score) == "3+4"
    assert diagnosis.verdict.score.tertiary == 5
    assert diagnosis.verdict.grade_group == GradeGroup.GG2


def test_threshold_boundary_is_malignant(biopsy, profile_of):
    diagnosis = diagnose(profile_of(0.9, 0.1, 0.0, 0.0), biopsy)

    assert diagnosis.verdict.malignant
    assert str(diagnosis.verdict.score) == "3+3"


def test_secondary_threshold_boundary(biopsy, profile_of):
    assert str(diagnose(profile_of(0.5, 0.43, 0.07, 0.0), biopsy).verdict.score) == "3+4"
    assert str(diagnose(profile_of(0.5, 0.44, 0.06, 0.0), biopsy).verdict.score) == "3+3"


def test_pure_score_never_escalates(biopsy, profile_of):
    # G5 is present but the second-ranked G4 is below the secondary threshold
    diagnosis = diagnose(profile_of(0.1, 0.8, 0.06, 0.04), biopsy)

    assert str(diagnosis.verdict.score) == "3+3"


def test_primary_tie_goes_to_higher_grade(biopsy, profile_of):
    assert str(diagnose(profile_of(0.2, 0.4, 0.4, 0.0), biopsy).verdict.score) == "4+3"


def test_risk_scores(biopsy, profile_of):
    risk = diagnose(profile_of(0.5, 0.2, 0.2, 0.1), biopsy).risk_scores

    assert risk.malignancy_score == pytest.approx(0.5)
    assert risk.aggressiveness_score == pytest.approx(0.3)


@given(epithelial_counts, st.sampled_from([0, 1, 2]))
def test_pure_score_consistency(counts, grade_index):
    benign, tumor = counts[0], sum(counts[1:])
    fractions = [0, 0, 0]
    fractions[grade_index] = tumor
    diagnosis = diagnose(volume_profile(areas_of(benign, *fractions)), PROFILES["biopsy"])

    if diagnosis.verdict.malignant:
        grade = 3 + grade_index
        score = diagnosis.verdict.score
        assert (score.primary, score.secondary) == (grade, grade)


@given(epithelial_counts, st.integers(2, 50), st.sampled_from(["biopsy", "tma"]))
def test_diagnose_is_scale_invariant(counts, factor, name):
    areas = areas_of(*counts)

    assert diagnose(volume_profile(areas.scaled(factor)), PROFILES[name]) == diagnose(
        volume_profile(areas), PROFILES[name]
    )


@given(epithelial_counts)
def test_permissive_profile_is_modal_plus_highest(counts):
    permissive = ThresholdProfile(
        tumor_threshold=0.0,
        secondary_threshold=0.0,
        tertiary_floor=0.0,
        scoring_mode=ScoringMode.BIOPSY_HIGHEST,
    )
    diagnosis = diagnose(volume_profile(areas_of(*counts)), permissive)

    amounts = {3: counts[1], 4: counts[2], 5: counts[3]}
    present = [g for g, n in amounts.items() if n > 0]
    if not present:
        assert not diagnosis.verdict.malignant
        return
    primary = max(present, key=lambda g: (amounts[g], g))
    others = [g for g in present if g != primary]
    secondary = max(others) if others else primary
    assert (diagnosis.verdict.score.primary, diagnosis.verdict.score.secondary) == (
        primary,
        secondary,
    )


def test_grade_mask_composes_the_steps(biopsy):
    grid = [[0, 1, 2, 2, 2, 2], [3, 3, 3, 3, 4, 4], [2, 2, 6, 6, 1, 0]]
    m = encode_mask(grid, 1.0)

    assert grade_mask(m, biopsy) == diagnose(volume_profile(class_areas(m)), biopsy)
    assert str(grade_mask(m, biopsy).verdict.score) == "3+4"


def test_grade_mask_all_benign(biopsy):
    assert not grade_mask(encode_mask([[2, 2], [2, 2]], 1.0), biopsy).verdict.malignant


def test_grade_mask_without_epithelium(biopsy):
    with pytest.raises(NoEpithelium):
        grade_mask(encode_mask([[0, 1], [1, 0]], 1.0), biopsy)


def test_load_shipped_profiles():
    assert load_profile("biopsy").tumor_threshold == 0.10
    assert load_profile("tma").scoring_mode == ScoringMode.PROSTATECTOMY_MOST_COMMON


def test_load_profile_from_json(tmp_path):
    path = tmp_path / "strict.json"
    path.write_text(
        json.dumps(
            {
                "tumor_threshold": 0.05,
                "secondary_threshold": 0.05,
                "tertiary_floor": 0.0,
                "scoring_mode": "biopsy_highest",
            }
        )
    )

    assert load_profile(path).tumor_threshold == 0.05


@pytest.mark.parametrize("content", ["{not json", '{"tumor_threshold": 0.1}'])
def test_load_profile_rejects_invalid_files(tmp_path, content):
    path = tmp_path / "broken.json"
    path.write_text(content)

    with pytest.raises(UnknownProfile):
        load_profile(path)


def test_load_profile_unknown_name():
    with pytest.raises(UnknownProfile):
        load_profile("radical")


def test_profile_rejects_floor_above_secondary():
    with pytest.raises(ValidationError):
        ThresholdProfile.model_validate(
            {
                "tumor_threshold": 0.1,
                "secondary_threshold": 0.01,
                "tertiary_floor": 0.05,
                "scoring_mode": "biopsy_highest",
            }
        )


def test_volume_profile_must_sum_to_one():
    with pytest.raises(ValidationError):
        VolumeProfile(pct_benign=0.5, pct_g3=0.2, pct_g4=0.2, pct_g5=0.0)


def test_verdict_rejects_mismatched_grade_group():
    with pytest.raises(ValidationError):
        Verdict(malignant=True, score=GleasonScore(primary=4, secondary=3), grade_group=2)


def test_score_rejects_repeated_tertiary():
    with pytest.raises(ValidationError):
        GleasonScore(primary=3, secondary=4, tertiary=4)


def test_gleason_score_labels():
    assert gleason_score_label(Verdict.benign()) == 0
    assert gleason_score_label(Verdict.of(3, 3)) == 1
    assert gleason_score_label(Verdict.of(5, 3)) == 6
    assert gleason_score_label(Verdict.of(5, 5)) == 9
    assert gleason_score_label(Verdict.of(3, 4, 5)) == 2
