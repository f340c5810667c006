from itertools import product
from statistics import median

import pytest

from services.exceptions import AlignmentError, DegenerateMarginals, GleasonEngineError
from services.stats.schemas import GRADE_GROUP_SCALE, PermutationStatistic
from services.stats.service import permutation_by_group, permutation_test


@pytest.fixture
def study(rng, noisy_reader):
    reference = rng.integers(0, 6, size=100)
    panel = {f"reader_{i:02d}": noisy_reader(rng, reference, 0.6, 6) for i in range(6)}
    return reference, panel


@pytest.mark.parametrize("statistic", list(PermutationStatistic))
def test_identical_members_give_p_one(study, statistic):
    reference, panel = study
    labels = panel["reader_00"]
    clones = {r: labels for r in panel}

    result = permutation_test(
        labels, clones, reference, statistic, 200, 5, GRADE_GROUP_SCALE, positive_from=2
    )

    assert result.observed_statistic == 0.0
    assert result.p_two_tailed == 1.0
    assert result.readers == 6


def test_perfect_system_is_significant(study):
    reference, panel = study

    result = permutation_test(
        reference, panel, reference, "kappa_vs_median", 200, 5, GRADE_GROUP_SCALE
    )

    assert result.observed_statistic > 0
    assert result.p_two_tailed == pytest.approx(1 / 201)
    assert result.null_samples == 200


def exhaustive_tail(system, panel, reference):
    """Share of all swap choices whose statistic is at least as extreme as the observed one."""
    members = [list(system)] + [list(labels) for labels in panel]

    def statistic(rows):
        accuracy = [sum(a == b for a, b in zip(row, reference)) / len(reference) for row in rows]
        return accuracy[0] - median(accuracy[1:])

    observed = statistic(members)
    extreme = 0
    choices = list(product(range(len(members)), repeat=len(reference)))
    for choice in choices:
        rows = [row[:] for row in members]
        for case, member in enumerate(choice):
            rows[0][case], rows[member][case] = members[member][case], members[0][case]
        extreme += abs(statistic(rows)) >= abs(observed) - 1e-9
    return extreme / len(choices)


def test_permutation_matches_exhaustive_enumeration():
    system, reference = [0, 1], [0, 1]
    panel = {"a": [0, 0], "b": [1, 1]}
    tail = exhaustive_tail(system, panel.values(), reference)

    result = permutation_test(
        system, panel, reference, "accuracy_vs_median", 20000, 11, GRADE_GROUP_SCALE
    )

    assert tail == pytest.approx(5 / 9)
    assert result.observed_statistic == pytest.approx(0.5)
    assert result.p_two_tailed == pytest.approx(tail, abs=0.015)

def test_permutation_is_deterministic(study):
    reference, panel = study
    system = panel.pop("reader_05")
    args = (system, panel, reference, "accuracy_vs_median", 300, 17, GRADE_GROUP_SCALE)

    first = permutation_test(*args)

    assert permutation_test(*args) == first
    assert permutation_test(*args, threads=4, chunk_size=7) == first


def test_permutation_seed_changes_draws(study):
    reference, panel = study
    system = panel.pop("reader_05")

    results = {
        permutation_test(
            system, panel, reference, "f1_vs_median", 100, seed, GRADE_GROUP_SCALE, 2
        ).p_two_tailed
        for seed in range(5)
    }

    assert len(results) > 1


def test_permutation_rejects_misaligned_labels(study):
    reference, panel = study

    with pytest.raises(AlignmentError):
        permutation_test(
            reference[:50], panel, reference, "kappa_vs_median", 10, 1, GRADE_GROUP_SCALE
        )


def test_permutation_needs_a_panel(study):
    reference, _ = study

    with pytest.raises(AlignmentError):
        permutation_test(reference, {}, reference, "kappa_vs_median", 10, 1, GRADE_GROUP_SCALE)


def test_permutation_needs_iterations(study):
    reference, panel = study

    with pytest.raises(GleasonEngineError):
        permutation_test(reference, panel, reference, "kappa_vs_median", 0, 1, GRADE_GROUP_SCALE)


def test_permutation_undefined_kappa():
    constant = [2] * 20

    with pytest.raises(DegenerateMarginals):
        permutation_test(
            constant, {"a": constant}, constant, "kappa_vs_median", 10, 1, GRADE_GROUP_SCALE
        )


def test_permutation_by_group(study):
    reference, panel = study
    system = panel.pop("reader_05")
    groups = {"junior": ["reader_00", "reader_01"], "senior": ["reader_02", "reader_03"]}

    results = permutation_by_group(
        system, panel, reference, groups, "kappa_vs_median", 50, 9, GRADE_GROUP_SCALE
    )

    assert list(results) == ["junior", "senior"]
    assert results["junior"] == permutation_test(
        system,
        {r: panel[r] for r in groups["junior"]},
        reference,
        "kappa_vs_median",
        50,
        9,
        GRADE_GROUP_SCALE,
    )
    assert results["senior"].readers == 2


def test_permutation_by_group_unknown_reader(study):
    reference, panel = study

    with pytest.raises(AlignmentError) as exc_info:
        permutation_by_group(
            reference,
            panel,
            reference,
            {"all": ["reader_00", "reader_99"]},
            "kappa_vs_median",
            10,
            1,
            GRADE_GROUP_SCALE,
        )

    assert exc_info.value.case_ids == ["reader_99"]


@pytest.mark.perf
def test_null_calibration(rng, noisy_reader):
    """With an exchangeable system, p < 0.05 in about 5% of simulated studies."""
    significant = 0
    for run in range(500):
        reference = rng.integers(0, 6, size=100)
        members = [noisy_reader(rng, reference, 0.6, 6) for _ in range(16)]
        panel = {f"reader_{i:02d}": labels for i, labels in enumerate(members[1:])}

        result = permutation_test(
            members[0], panel, reference, "kappa_vs_median", 1000, run, GRADE_GROUP_SCALE
        )
        significant += result.p_two_tailed < 0.05

    assert 0.02 <= significant / 500 <= 0.08
