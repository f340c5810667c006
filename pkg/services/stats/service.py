"""
2026 Module responsible for the evaluation battery: confusion matrices,
agreement, ROC analysis with bootstrap bands, operating points, F1 and the
swap permutation test.
"""
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from sklearn.metrics import (
    cohen_kappa_score,
    confusion_matrix,
    f1_score,
    roc_auc_score,
    roc_curve,
)

from services.config import get_settings
from services.exceptions import (
    AlignmentError,
    DegenerateMarginals,
    GleasonEngineError,
    LengthMismatch,
    SingleClassTruth,
    UnknownLabel,
    Unreachable,
)
from services.rng import stream
from services.stats.schemas import (
    BootstrapRoc,
    ConfusionMatrix,
    KappaWeights,
    OperatingPoint,
    OrdinalScale,
    PairwiseKappa,
    PermutationResult,
    PermutationStatistic,
    RocCurve,
    RocPoint,
)

logger = logging.getLogger(__name__)

BOOTSTRAP_RETRIES = 100
FPR_GRID = np.linspace(0.0, 1.0, 101)
_TIE_TOLERANCE = 1e-12


def _aligned(ref: Sequence, pred: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    ref, pred = np.asarray(ref), np.asarray(pred)
    if ref.shape != pred.shape or ref.ndim != 1:
        raise LengthMismatch(f"label vectors differ in length: {ref.shape} vs {pred.shape}")
    if len(ref) == 0:
        raise LengthMismatch("label vectors are empty")
    return ref, pred


def _check_labels(labels: np.ndarray, scale: OrdinalScale) -> np.ndarray:
    labels = np.asarray(labels)
    bad = (labels < 0) | (labels >= scale.k) | (labels != np.round(labels))
    if bad.any():
        raise UnknownLabel(
            f"label {labels[np.argmax(bad)]!r} is not on the {scale.name} scale"
        )
    return labels.astype(np.int64)


def confusion(ref: Sequence[int], pred: Sequence[int], scale: OrdinalScale) -> ConfusionMatrix:
    """
    Count reference/prediction pairs.
    :param ref: Reference labels (category indices of ``scale``).
    :param pred: Predicted labels, aligned with ``ref``.
    :return: k x k counts, rows reference and columns prediction.
    :raises: LengthMismatch, UnknownLabel.
    """
    ref, pred = _aligned(ref, pred)
    ref, pred = _check_labels(ref, scale), _check_labels(pred, scale)
    counts = confusion_matrix(ref, pred, labels=np.arange(scale.k))
    return ConfusionMatrix(scale=scale, counts=counts.tolist())


def accuracy(ref: Sequence, pred: Sequence) -> float:
    ref, pred = _aligned(ref, pred)
    return float(np.mean(ref == pred))


def _weight_matrix(k: int, weights: KappaWeights) -> np.ndarray:
    i, j = np.indices((k, k))
    if weights == KappaWeights.QUADRATIC:
        return (i - j) ** 2 / (k - 1) ** 2
    if weights == KappaWeights.LINEAR:
        return np.abs(i - j) / (k - 1)
    return (i != j).astype(float)


def _kappa_rows(preds: np.ndarray, ref: np.ndarray, k: int, w: np.ndarray) -> np.ndarray:
    """Weighted kappa of every row of ``preds`` against ``ref``; nan where undefined."""
    rows, n = preds.shape
    flat = (np.arange(rows)[:, None] * k * k + ref[None, :] * k + preds).ravel()
    observed = np.bincount(flat, minlength=rows * k * k).reshape(rows, k, k) / n
    ref_marginal = np.bincount(ref, minlength=k) / n
    pred_marginal = observed.sum(axis=1)
    expected = ref_marginal[None, :, None] * pred_marginal[:, None, :]
    disagreement = (w * observed).sum(axis=(1, 2))
    chance = (w * expected).sum(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = 1.0 - disagreement / chance
    kappa[chance == 0.0] = np.nan
    return kappa


def cohen_kappa(
    ref: Sequence[int],
    pred: Sequence[int],
    scale: OrdinalScale,
    weights: KappaWeights | str = KappaWeights.QUADRATIC,
) -> float:
    """
    Weighted Cohen's kappa, 1 - sum(w*O) / sum(w*E).
    :param weights: ``quadratic`` (default), ``linear`` or ``none``.
    :raises: LengthMismatch, UnknownLabel, DegenerateMarginals when the
        expected disagreement is zero.
    """
    ref, pred = _aligned(ref, pred)
    ref, pred = _check_labels(ref, scale), _check_labels(pred, scale)
    weights = KappaWeights(weights)
    # expected disagreement vanishes only when both raters use one and the same label
    if np.unique(np.concatenate([ref, pred])).size == 1:
        raise DegenerateMarginals("expected disagreement is zero; kappa is undefined")
    kappa = cohen_kappa_score(
        ref,
        pred,
        labels=np.arange(scale.k),
        weights=None if weights == KappaWeights.NONE else weights.value,
    )
    return float(kappa)


def quadratic_kappa(ref: Sequence[int], pred: Sequence[int], scale: OrdinalScale) -> float:
    return cohen_kappa(ref, pred, scale, KappaWeights.QUADRATIC)


def pairwise_kappa(
    raters: Mapping[str, Sequence[int]],
    scale: OrdinalScale,
    weights: KappaWeights | str = KappaWeights.QUADRATIC,
) -> PairwiseKappa:
    """
    Kappa between every pair of raters and each rater's median against the others.
    :param raters: Rater id to labels, all aligned on the same cases.
    :return: Symmetric matrix (None on the diagonal and where undefined) and medians.
    """
    ids = sorted(raters)
    labels = [_check_labels(np.asarray(raters[r]), scale) for r in ids]
    if len({len(v) for v in labels}) > 1:
        raise LengthMismatch("raters labeled different numbers of cases")
    w = _weight_matrix(scale.k, KappaWeights(weights))
    n = len(ids)
    matrix = np.full((n, n), np.nan)
    for i in range(n):
        if i + 1 < n:
            others = np.stack(labels[i + 1 :])
            matrix[i, i + 1 :] = _kappa_rows(others, labels[i], scale.k, w)
            matrix[i + 1 :, i] = matrix[i, i + 1 :]
    median = {}
    for i, rater in enumerate(ids):
        row = np.delete(matrix[i], i)
        median[rater] = None if np.all(np.isnan(row)) else float(np.nanmedian(row))
    return PairwiseKappa(
        rater_ids=ids,
        matrix=[[None if np.isnan(v) else float(v) for v in row] for row in matrix],
        median=median,
    )


def _binary_truth(scores: Sequence[float], truth: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    scores, truth = _aligned(scores, truth)
    scores = scores.astype(float)
    truth = truth.astype(bool)
    positives = int(truth.sum())
    if positives == 0 or positives == len(truth):
        raise SingleClassTruth("ROC analysis needs at least one positive and one negative case")
    return scores, truth


def _curve_arrays(
    scores: np.ndarray, truth: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    fpr, tpr, thresholds = roc_curve(truth, scores, drop_intermediate=False)
    # one point per distinct score plus the empty-positive point, by rising threshold
    thresholds, tpr, fpr = thresholds[::-1].astype(float), tpr[::-1], fpr[::-1]
    thresholds[-1] = np.inf
    return thresholds, tpr, fpr, float(roc_auc_score(truth, scores))


def roc(scores: Sequence[float], truth: Sequence) -> RocCurve:
    """
    ROC curve over every distinct score, a case being positive when its score
    reaches the threshold.
    :param scores: Continuous score per case.
    :param truth: Binary truth per case.
    :return: Points by rising threshold, from (1, 1) to (0, 0), and the
        Mann-Whitney AUC (ties count one half).
    :raises: SingleClassTruth, LengthMismatch.
    """
    scores, truth = _binary_truth(scores, truth)
    thresholds, tpr, fpr, auc = _curve_arrays(scores, truth)
    points = [
        RocPoint(threshold=float(t), sensitivity=float(s), false_positive_rate=float(f))
        for t, s, f in zip(thresholds, tpr, fpr)
    ]
    return RocCurve(
        points=points,
        auc=auc,
        positives=int(truth.sum()),
        negatives=int((~truth).sum()),
    )


def _tpr_on_grid(tpr: np.ndarray, fpr: np.ndarray) -> np.ndarray:
    # points come by rising threshold, so reverse for rising FPR
    fpr, tpr = fpr[::-1], tpr[::-1]
    last = np.append(fpr[1:] != fpr[:-1], True)
    return np.interp(FPR_GRID, fpr[last], tpr[last])


def _bootstrap_replicate(
    scores: np.ndarray, truth: np.ndarray, seed: int, index: int
) -> Tuple[float, np.ndarray]:
    rng = stream(seed, index)
    n = len(scores)
    for _ in range(BOOTSTRAP_RETRIES):
        sample = rng.integers(0, n, size=n)
        resampled = truth[sample]
        if 0 < resampled.sum() < n:
            break
    else:
        raise SingleClassTruth(
            f"bootstrap replicate {index} drew a single class {BOOTSTRAP_RETRIES} times"
        )
    _, tpr, fpr, auc = _curve_arrays(scores[sample], resampled)
    return auc, _tpr_on_grid(tpr, fpr)


def bootstrap_roc(
    scores: Sequence[float],
    truth: Sequence,
    replicates: int,
    seed: int,
    ci_level: float = 0.95,
    threads: int | None = None,
) -> BootstrapRoc:
    """
    Case-level bootstrap of the ROC curve.
    :param replicates: Number of resamples; replicate ``i`` draws from the
        stream of ``(seed, i)``, so the result does not depend on ``threads``.
    :param ci_level: Width of the percentile interval.
    :return: Mean TPR over a fixed FPR grid with percentile band, and the AUC
        interval.
    :raises: SingleClassTruth if a replicate cannot draw both classes.
    """
    if replicates < 1:
        raise GleasonEngineError("replicates must be at least 1")
    scores, truth = _binary_truth(scores, truth)
    threads = threads or get_settings().THREADS
    point_auc = _curve_arrays(scores, truth)[3]

    def run(index: int) -> Tuple[float, np.ndarray]:
        return _bootstrap_replicate(scores, truth, seed, index)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, range(replicates)))
    aucs = np.array([auc for auc, _ in results])
    tprs = np.stack([tpr for _, tpr in results])
    tail = (1.0 - ci_level) / 2.0 * 100.0
    lower, upper = np.percentile(tprs, [tail, 100.0 - tail], axis=0)
    auc_lower, auc_upper = np.percentile(aucs, [tail, 100.0 - tail])
    logger.info(f"Bootstrapped ROC over {replicates} replicates (seed {seed})")
    return BootstrapRoc(
        replicates=replicates,
        seed=seed,
        ci_level=ci_level,
        auc=point_auc,
        auc_mean=float(aucs.mean()),
        auc_lower=float(auc_lower),
        auc_upper=float(auc_upper),
        fpr_grid=FPR_GRID.tolist(),
        tpr_mean=tprs.mean(axis=0).tolist(),
        tpr_lower=lower.tolist(),
        tpr_upper=upper.tolist(),
    )


def operating_point(curve: RocCurve, min_sensitivity: float) -> OperatingPoint:
    """
    The threshold with the highest specificity among those keeping
    sensitivity at or above ``min_sensitivity``.
    :raises: Unreachable if no threshold attains the sensitivity.
    """
    if not 0.0 < min_sensitivity <= 1.0:
        raise GleasonEngineError("min_sensitivity must lie in (0, 1]")
    candidates = [
        p for p in curve.points if p.sensitivity >= min_sensitivity - _TIE_TOLERANCE
    ]
    if not candidates:
        raise Unreachable(f"no threshold reaches sensitivity {min_sensitivity}")
    best = max(candidates, key=lambda p: (p.specificity, p.sensitivity, p.threshold))
    return OperatingPoint(
        threshold=best.threshold, sensitivity=best.sensitivity, specificity=best.specificity
    )


def youden_threshold(curve: RocCurve) -> OperatingPoint:
    """Threshold maximizing sensitivity + specificity - 1; ties keep the higher specificity."""
    best = max(
        curve.points,
        key=lambda p: (p.sensitivity - p.false_positive_rate, p.specificity),
    )
    return OperatingPoint(
        threshold=best.threshold, sensitivity=best.sensitivity, specificity=best.specificity
    )


def f1(ref: Sequence, pred: Sequence) -> float:
    """
    F1 score of binary predictions; 0 when there is no true positive to speak of.
    :raises: LengthMismatch.
    """
    ref, pred = _aligned(ref, pred)
    return float(f1_score(ref.astype(bool), pred.astype(bool), zero_division=0))


def _f1_rows(preds: np.ndarray, ref: np.ndarray) -> np.ndarray:
    tp = (preds & ref[None, :]).sum(axis=1)
    fp = (preds & ~ref[None, :]).sum(axis=1)
    fn = (~preds & ref[None, :]).sum(axis=1)
    denominator = 2 * tp + fp + fn
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(denominator > 0, 2 * tp / denominator, 0.0)
    return score


def _metric_rows(
    statistic: PermutationStatistic,
    scale: OrdinalScale,
    reference: np.ndarray,
    positive_from: int,
) -> Callable[[np.ndarray], np.ndarray]:
    if statistic == PermutationStatistic.KAPPA_VS_MEDIAN:
        w = _weight_matrix(scale.k, KappaWeights.QUADRATIC)
        return lambda preds: _kappa_rows(preds, reference, scale.k, w)
    if statistic == PermutationStatistic.ACCURACY_VS_MEDIAN:
        return lambda preds: (preds == reference[None, :]).mean(axis=1)
    truth = reference >= positive_from
    return lambda preds: _f1_rows(preds >= positive_from, truth)


def _vs_median(values: np.ndarray) -> np.ndarray:
    """System metric (column 0) minus the median over the panel columns."""
    panel = values[:, 1:]
    if np.isnan(panel).any():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            median = np.nanmedian(panel, axis=1)
    else:
        median = np.median(panel, axis=1)
    return values[:, 0] - median


def permutation_test(
    system: Sequence[int],
    panel: Mapping[str, Sequence[int]],
    reference: Sequence[int],
    statistic: PermutationStatistic | str,
    iterations: int,
    seed: int,
    scale: OrdinalScale,
    positive_from: int = 1,
    threads: int | None = None,
    chunk_size: int = 250,
) -> PermutationResult:
    """
    Swap permutation test of the system against a reader panel.
    For every case of every iteration one member of {system} + panel is drawn
    uniformly and trades its label with the system. The statistic is the
    system's metric minus the panel's median metric.
    :param panel: Reader id to labels, aligned with ``system`` and ``reference``.
    :param statistic: kappa, accuracy or F1 (labels >= ``positive_from`` are positive) vs median.
    :param iterations: Number of permutations; iteration ``i`` draws from the
        stream of ``(seed, i)``.
    :return: Observed statistic and the add-one two-tailed p-value.
    :raises: AlignmentError, DegenerateMarginals if the observed kappa is undefined.
    """
    statistic = PermutationStatistic(statistic)
    if iterations < 1:
        raise GleasonEngineError("iterations must be at least 1")
    if not panel:
        raise AlignmentError("the panel has no readers")
    readers = sorted(panel)
    rows = [np.asarray(system)] + [np.asarray(panel[r]) for r in readers]
    reference = np.asarray(reference)
    lengths = {len(r) for r in rows} | {len(reference)}
    if len(lengths) != 1:
        raise AlignmentError(
            f"system, panel and reference cover different case counts: {sorted(lengths)}"
        )
    labels = np.stack([_check_labels(r, scale) for r in rows])
    reference = _check_labels(reference, scale)
    metric = _metric_rows(statistic, scale, reference, positive_from)

    observed = float(_vs_median(metric(labels)[None, :])[0])
    if np.isnan(observed):
        raise DegenerateMarginals("the observed statistic is undefined")

    n_members, n_cases = labels.shape
    cases = np.arange(n_cases)

    def run(bounds: Tuple[int, int]) -> int:
        start, stop = bounds
        batch = np.repeat(labels[None, :, :], stop - start, axis=0)
        choices = np.stack(
            [
                stream(seed, i).integers(0, n_members, size=n_cases)
                for i in range(start, stop)
            ]
        )
        iteration = np.arange(stop - start)[:, None]
        batch[iteration, choices, cases[None, :]] = labels[0][None, :]
        batch[:, 0, :] = labels[choices, cases[None, :]]
        values = metric(batch.reshape(-1, n_cases)).reshape(stop - start, n_members)
        permuted = _vs_median(values)
        return int(np.sum(np.abs(permuted) >= abs(observed) - _TIE_TOLERANCE))

    bounds = [(s, min(iterations, s + chunk_size)) for s in range(0, iterations, chunk_size)]
    with ThreadPoolExecutor(max_workers=threads or get_settings().THREADS) as pool:
        extreme = sum(pool.map(run, bounds))
    p_value = (1 + extreme) / (iterations + 1)
    logger.info(
        f"Permutation test {statistic.value}: T={observed:.6f}, p={p_value:.6f} "
        f"over {iterations} iterations"
    )
    return PermutationResult(
        statistic=statistic,
        observed_statistic=observed,
        null_samples=iterations,
        p_two_tailed=p_value,
        seed=seed,
        readers=len(readers),
    )


def permutation_by_group(
    system: Sequence[int],
    panel: Mapping[str, Sequence[int]],
    reference: Sequence[int],
    groups: Mapping[str, List[str]],
    statistic: PermutationStatistic | str,
    iterations: int,
    seed: int,
    scale: OrdinalScale,
    **kwargs,
) -> Dict[str, PermutationResult]:
    """Run ``permutation_test`` against every named subgroup of the panel."""
    results = {}
    for name in sorted(groups):
        missing = [r for r in groups[name] if r not in panel]
        if missing:
            raise AlignmentError(f"panel group {name} names unknown readers", missing)
        subset = {r: panel[r] for r in groups[name]}
        results[name] = permutation_test(
            system, subset, reference, statistic, iterations, seed, scale, **kwargs
        )
    return results
