import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from services.exceptions import DegenerateMarginals, LengthMismatch, UnknownLabel
from services.stats.schemas import (
    BINARY_SCALE,
    GLEASON_SCORE_SCALE,
    GRADE_GROUP_SCALE,
    KappaWeights,
    OrdinalScale,
)
from services.stats.service import (
    _kappa_rows,
    _weight_matrix,
    accuracy,
    cohen_kappa,
    confusion,
    pairwise_kappa,
    quadratic_kappa,
)

label_pairs = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
    )
)


def test_confusion_counts():
    m = confusion([0, 1, 1, 5], [0, 1, 2, 5], GRADE_GROUP_SCALE)

    counts = m.as_array()
    assert counts.shape == (6, 6)
    assert counts[1, 1] == 1 and counts[1, 2] == 1 and counts[5, 5] == 1
    assert m.total == 4


def test_confusion_rejects_unknown_label():
    with pytest.raises(UnknownLabel):
        confusion([0, 6], [0, 1], GRADE_GROUP_SCALE)


def test_confusion_rejects_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0], GRADE_GROUP_SCALE)


def test_accuracy():
    assert accuracy([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5


def test_kappa_chance_agreement():
    # every cell of the confusion matrix holds a quarter, so agreement is pure chance
    assert quadratic_kappa([1, 1, 5, 5], [1, 5, 1, 5], GRADE_GROUP_SCALE) == pytest.approx(0.0)


def test_kappa_perfect_agreement():
    labels = [0, 1, 2, 3, 4, 5, 2, 2]

    assert quadratic_kappa(labels, labels, GRADE_GROUP_SCALE) == 1.0


def test_kappa_on_gleason_score_scale():
    ref = [0, 1, 2, 9, 9]

    assert quadratic_kappa(ref, ref, GLEASON_SCORE_SCALE) == 1.0


def test_kappa_matches_formula_on_random_datasets(rng, kappa_oracle):
    for _ in range(1000):
        n = int(rng.integers(50, 501))
        ref = rng.integers(0, 6, size=n)
        pred = np.clip(ref + rng.integers(-2, 3, size=n), 0, 5)

        kappa = quadratic_kappa(ref, pred, GRADE_GROUP_SCALE)

        assert abs(kappa - kappa_oracle(ref.tolist(), pred.tolist(), 6)) <= 1e-12
        assert quadratic_kappa(pred, ref, GRADE_GROUP_SCALE) == pytest.approx(kappa, abs=1e-12)
        assert quadratic_kappa(ref, ref, GRADE_GROUP_SCALE) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "weights,weight",
    [
        ("linear", lambda i, j, k: abs(i - j) / (k - 1)),
        ("none", lambda i, j, k: float(i != j)),
    ],
)
def test_other_weightings_match_formula(rng, kappa_oracle, weights, weight):
    ref = rng.integers(0, 6, size=200)
    pred = np.clip(ref + rng.integers(-1, 2, size=200), 0, 5)

    kappa = cohen_kappa(ref, pred, GRADE_GROUP_SCALE, weights=weights)

    assert kappa == pytest.approx(kappa_oracle(ref.tolist(), pred.tolist(), 6, weight), abs=1e-12)


@given(label_pairs)
def test_kappa_is_symmetric_and_bounded(pair):
    ref, pred = pair
    try:
        kappa = quadratic_kappa(ref, pred, GRADE_GROUP_SCALE)
    except DegenerateMarginals:
        return

    assert kappa == pytest.approx(quadratic_kappa(pred, ref, GRADE_GROUP_SCALE), abs=1e-12)
    assert kappa <= 1.0 + 1e-12
    if ref != pred:
        assert kappa < 1.0


def test_kappa_degenerate_marginals():
    with pytest.raises(DegenerateMarginals):
        quadratic_kappa([2, 2, 2], [2, 2, 2], GRADE_GROUP_SCALE)


@pytest.mark.parametrize("weights", list(KappaWeights))
def test_batched_kappa_agrees_with_single_shot(rng, noisy_reader, weights):
    reference = rng.integers(0, 6, size=120)
    readers = np.stack([noisy_reader(rng, reference, 0.6, 6) for _ in range(5)])

    batched = _kappa_rows(readers, reference, 6, _weight_matrix(6, weights))

    expected = [cohen_kappa(reference, row, GRADE_GROUP_SCALE, weights) for row in readers]
    assert batched == pytest.approx(expected, abs=1e-12)


def test_kappa_on_binary_scale():
    assert quadratic_kappa([0, 1, 0, 1], [0, 1, 1, 0], BINARY_SCALE) == pytest.approx(0.0)


def test_scale_needs_two_categories():
    with pytest.raises(ValueError):
        OrdinalScale(name="single", categories=["only"])


def test_pairwise_kappa_matrix(rng, noisy_reader):
    reference = rng.integers(0, 6, size=80)
    raters = {f"reader_{i}": noisy_reader(rng, reference, 0.7, 6) for i in range(4)}

    result = pairwise_kappa(raters, GRADE_GROUP_SCALE)

    assert result.rater_ids == sorted(raters)
    for i, a in enumerate(result.rater_ids):
        assert result.matrix[i][i] is None
        for j, b in enumerate(result.rater_ids):
            if i != j:
                expected = quadratic_kappa(raters[a], raters[b], GRADE_GROUP_SCALE)
                assert result.matrix[i][j] == pytest.approx(expected, abs=1e-12)
                assert result.matrix[i][j] == result.matrix[j][i]
    others = [result.matrix[0][j] for j in range(1, 4)]
    assert result.median["reader_0"] == pytest.approx(float(np.median(others)))
    assert result.mean_pairwise == pytest.approx(
        np.mean([result.matrix[i][j] for i in range(4) for j in range(i + 1, 4)])
    )


def test_pairwise_kappa_constant_raters():
    result = pairwise_kappa({"a": [1, 1, 1], "b": [1, 1, 1]}, GRADE_GROUP_SCALE)

    assert result.matrix == [[None, None], [None, None]]
    assert result.median == {"a": None, "b": None}
    assert result.mean_pairwise is None


def test_pairwise_kappa_rejects_uneven_raters():
    with pytest.raises(LengthMismatch):
        pairwise_kappa({"a": [1, 2], "b": [1]}, GRADE_GROUP_SCALE)
