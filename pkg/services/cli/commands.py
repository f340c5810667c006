"""
2026 Module responsible for the command implementations: grading runs,
consensus processing, evaluation reports and synthetic studies.

Each command writes its manifest first, then its tables, and returns the
process exit code.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from services.cli.csvio import optional_float, optional_int, read_table, write_table
from services.cli.manifest import write_manifest
from services.cli.schemas import EvaluationConfig
from services.cli.svg import confusion_svg, roc_svg, write_svg
from services.config import get_settings
from services.consensus.schemas import IhcRecord, Read, ReadFlag
from services.consensus.service import run_protocol
from services.exceptions import (
    AlignmentError,
    DegenerateMarginals,
    GleasonEngineError,
    NoEpithelium,
    SchemaError,
    SingleClassTruth,
    Unreachable,
)
from services.grading.schemas import GleasonScore, ThresholdProfile, Verdict
from services.grading.service import (
    PROFILES,
    diagnose,
    gleason_score_label,
    load_profile,
    volume_profile,
)
from services.raster.pgm import read_pgm, write_pgm
from services.raster.service import class_areas
from services.rng import derive_seed
from services.stats.schemas import (
    GLEASON_SCORE_SCALE,
    GRADE_GROUP_SCALE,
    OrdinalScale,
    PermutationStatistic,
)
from services.stats.service import (
    accuracy,
    bootstrap_roc,
    confusion,
    f1,
    operating_point,
    pairwise_kappa,
    permutation_by_group,
    quadratic_kappa,
    roc,
    youden_threshold,
)
from services.synth.schemas import NoiseModel, SynthSpec
from services.synth.service import corrupt, generate

logger = logging.getLogger(__name__)

SYSTEM_ID = "system"
# cutoff name -> (lowest positive grade-group label, score column)
ROC_CUTOFFS = {
    "malignant": (1, "malignancy_score"),
    "gg2": (2, "aggressiveness_score"),
}

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def _workers() -> int:
    return get_settings().THREADS


def _verdict_fields(verdict: Optional[Verdict]) -> Dict[str, object]:
    if verdict is None:
        return {"verdict": None, "primary": None, "secondary": None, "tertiary": None,
                "grade_group": None}
    if not verdict.malignant:
        return {"verdict": "benign", "primary": None, "secondary": None, "tertiary": None,
                "grade_group": 0}
    return {
        "verdict": "malignant",
        "primary": verdict.score.primary,
        "secondary": verdict.score.secondary,
        "tertiary": verdict.score.tertiary,
        "grade_group": int(verdict.grade_group),
    }


def _verdict_from_row(row: pd.Series) -> Optional[Verdict]:
    """Parse the verdict/primary/secondary/tertiary/grade_group cells; None when blank."""
    line = int(row["line"])
    kind = row["verdict"].strip().lower()
    group = optional_int(row["grade_group"], "grade_group", line)
    try:
        if kind == "benign":
            if group not in (None, 0):
                raise SchemaError("a benign verdict has grade group 0", line=line)
            return Verdict.benign()
        if kind == "malignant":
            score = GleasonScore(
                primary=optional_int(row["primary"], "primary", line),
                secondary=optional_int(row["secondary"], "secondary", line),
                tertiary=optional_int(row["tertiary"], "tertiary", line),
            )
            return Verdict(malignant=True, score=score, grade_group=group)
    except ValidationError as e:
        raise SchemaError(_first_error(e), line=line) from e
    if kind in ("", "ungradeable", "error"):
        return None
    raise SchemaError(f"unknown verdict {row['verdict']!r}", line=line)


def _first_error(e: ValidationError) -> str:
    error = e.errors()[0]
    where = ".".join(str(p) for p in error.get("loc", ()))
    return f"{where}: {error['msg']}" if where else error["msg"]


def _load_config(model: Type[ConfigT], path: str | Path) -> ConfigT:
    """
    Read and validate a JSON configuration file.
    :raises: SchemaError if the file is unreadable, not JSON or fails validation.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise SchemaError(f"{path}: cannot read configuration: {e.strerror or e}") from e
    except ValueError as e:
        raise SchemaError(f"{path}: not valid JSON: {e}") from e
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise SchemaError(f"{path}: {_first_error(e)}") from e


# grade


def _mask_files(inputs: Sequence[str | Path]) -> List[Tuple[str, Path]]:
    files = []
    for p in inputs:
        p = Path(p)
        files.extend(sorted(p.glob("*.pgm")) if p.is_dir() else [p])
    by_case = {}
    for f in files:
        if f.stem in by_case:
            raise SchemaError(f"case {f.stem} appears twice: {by_case[f.stem]} and {f}")
        by_case[f.stem] = f
    return sorted(by_case.items())


def _grade_one(
    case_id: str, path: Path, profile: ThresholdProfile, tile_rows: Optional[int]
) -> Tuple[Dict[str, object], bool]:
    row: Dict[str, object] = {
        "case_id": case_id,
        "pct_benign": None,
        "pct_g3": None,
        "pct_g4": None,
        "pct_g5": None,
        "tumor_fraction": None,
        "malignancy_score": None,
        "aggressiveness_score": None,
        "errors": None,
        **_verdict_fields(None),
    }
    try:
        vp = volume_profile(class_areas(read_pgm(path, tile_rows=tile_rows)))
    except NoEpithelium as e:
        logger.warning(f"Case {case_id}: {e.detail}")
        row.update(verdict="ungradeable", errors=e.detail)
        return row, False
    except GleasonEngineError as e:
        logger.error(f"Case {case_id}: {e.detail}")
        row.update(verdict="error", errors=e.detail)
        return row, True
    diagnosis = diagnose(vp, profile)
    row.update(
        pct_benign=vp.pct_benign,
        pct_g3=vp.pct_g3,
        pct_g4=vp.pct_g4,
        pct_g5=vp.pct_g5,
        tumor_fraction=diagnosis.tumor_fraction,
        malignancy_score=diagnosis.risk_scores.malignancy_score,
        aggressiveness_score=diagnosis.risk_scores.aggressiveness_score,
        **_verdict_fields(diagnosis.verdict),
    )
    return row, False


def cmd_grade(
    inputs: Sequence[str | Path],
    profile: str,
    out: Path,
    tile_rows: Optional[int] = None,
) -> int:
    """
    Grade every mask file (directories contribute their ``*.pgm`` files).
    :return: 0, or 1 if any mask could not be read.
    """
    threshold_profile = load_profile(profile)
    profile_path = None if profile in PROFILES else profile
    write_manifest(out, "grade", inputs, config_path=profile_path)
    cases = _mask_files(inputs)
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(
            pool.map(lambda item: _grade_one(item[0], item[1], threshold_profile, tile_rows), cases)
        )
    write_table(out / "diagnoses.csv", "diagnoses", [row for row, _ in results])
    failures = sum(failed for _, failed in results)
    logger.info(f"Graded {len(cases)} masks, {failures} failed")
    return 1 if failures else 0


# consensus


def load_reads(path: str | Path) -> List[Read]:
    _, frame = read_table(path, "reads")
    reads = []
    for _, row in frame.iterrows():
        line = int(row["line"])
        flags = {f.strip().lower() for f in row["flags"].split(";") if f.strip()}
        try:
            read = Read(
                case_id=row["case_id"],
                reader_id=row["reader_id"],
                round=optional_int(row["round"], "round", line),
                verdict=_verdict_from_row(row),
                tumor_volume_estimate=(
                    None
                    if row["tumor_volume_pct"] == ""
                    else optional_float(row["tumor_volume_pct"], "tumor_volume_pct", line) / 100.0
                ),
                flags=frozenset(ReadFlag(f) for f in flags),
            )
        except ValidationError as e:
            raise SchemaError(_first_error(e), line=line) from e
        except ValueError as e:
            raise SchemaError(str(e), line=line) from e
        reads.append(read)
    return reads


def load_ihc(path: str | Path) -> List[IhcRecord]:
    _, frame = read_table(path, "ihc")
    records = []
    for _, row in frame.iterrows():
        kind = row["verdict"].strip().lower()
        if kind not in ("benign", "malignant"):
            raise SchemaError(
                f"IHC verdict must be benign or malignant, got {kind!r}", line=int(row["line"])
            )
        records.append(IhcRecord(case_id=row["case_id"], malignant=kind == "malignant"))
    return records


def cmd_consensus(reads_path: str | Path, ihc_path: Optional[str | Path], out: Path) -> int:
    """Run the consensus protocol over recorded reads and write the reference standard."""
    inputs = [reads_path] + ([ihc_path] if ihc_path else [])
    write_manifest(out, "consensus", inputs)
    reads = load_reads(reads_path)
    ihc = load_ihc(ihc_path) if ihc_path else []
    result = run_protocol(reads, ihc)
    write_table(
        out / "reference.csv",
        "reference",
        (
            {"case_id": e.case_id, "status": e.status, **_verdict_fields(e.verdict)}
            for e in result.reference
        ),
    )
    write_table(out / "routing.csv", "routing", (r.model_dump() for r in result.routing))
    write_table(out / "worklist.csv", "worklist", (w.model_dump() for w in result.worklist))
    write_table(
        out / "summary.csv",
        "summary",
        [
            {"metric": "cases", "value": len(result.states)},
            {"metric": "terminal", "value": len(result.reference)},
            {"metric": "waiting", "value": len(result.worklist)},
            {"metric": "round1_mean_pairwise_kappa", "value": result.round1_mean_kappa},
        ],
    )
    return 0


# evaluate


def load_predictions(path: str | Path) -> Dict[str, Tuple[Verdict, float, float]]:
    """Gradeable rows of a diagnoses table: case id to (verdict, malignancy, aggressiveness)."""
    _, frame = read_table(path, "diagnoses")
    predictions = {}
    for _, row in frame.iterrows():
        verdict = _verdict_from_row(row)
        if verdict is None:
            logger.warning(f"Case {row['case_id']}: no prediction ({row['verdict']})")
            continue
        line = int(row["line"])
        predictions[row["case_id"]] = (
            verdict,
            optional_float(row["malignancy_score"], "malignancy_score", line),
            optional_float(row["aggressiveness_score"], "aggressiveness_score", line),
        )
    return predictions


def load_reference(path: str | Path) -> Dict[str, Verdict]:
    """Reference verdicts from a consensus reference table or a synthetic ground truth."""
    _, frame = read_table(path, ["reference", "ground_truth"])
    reference = {}
    for _, row in frame.iterrows():
        verdict = _verdict_from_row(row)
        if verdict is not None:
            reference[row["case_id"]] = verdict
    return reference


def _panel_labels(reads: Sequence[Read], cases: Sequence[str]) -> Dict[str, Dict[str, int]]:
    panel: Dict[str, Dict[str, int]] = {}
    wanted = set(cases)
    for read in reads:
        if read.round == 1 and not read.ungradeable and read.case_id in wanted:
            panel.setdefault(read.reader_id, {})[read.case_id] = read.verdict.grade_group_label
    return panel


def _kappa_or_none(ref: Sequence[int], pred: Sequence[int], scale: OrdinalScale) -> Optional[float]:
    try:
        return quadratic_kappa(ref, pred, scale)
    except DegenerateMarginals:
        return None


def cmd_evaluate(
    predictions_path: str | Path,
    reference_path: str | Path,
    out: Path,
    panel_path: Optional[str | Path] = None,
    config_path: Optional[str | Path] = None,
    seed: Optional[int] = None,
    replicates: Optional[int] = None,
    iterations: Optional[int] = None,
) -> int:
    """
    Compare a system's diagnoses with a reference standard and, when given,
    with a reader panel.
    :raises: AlignmentError naming reference cases without a prediction.
    """
    config = EvaluationConfig()
    if config_path:
        config = _load_config(EvaluationConfig, config_path)
    settings = get_settings()
    seed = config.seed if seed is None else seed
    replicates = replicates or config.replicates or settings.REPLICATES
    iterations = iterations or config.iterations or settings.ITERATIONS
    inputs = [predictions_path, reference_path] + ([panel_path] if panel_path else [])
    write_manifest(out, "evaluate", inputs, config_path=config_path, seed=seed)

    predictions = load_predictions(predictions_path)
    reference = load_reference(reference_path)
    missing = sorted(set(reference) - set(predictions))
    if missing:
        raise AlignmentError(
            f"{len(missing)} reference cases have no prediction: {missing}", missing
        )
    extra = sorted(set(predictions) - set(reference))
    if extra:
        logger.warning(f"Ignoring {len(extra)} predictions without a reference")
    cases = sorted(reference)

    gg_ref = np.array([reference[c].grade_group_label for c in cases])
    gg_pred = np.array([predictions[c][0].grade_group_label for c in cases])
    gs_ref = np.array([gleason_score_label(reference[c]) for c in cases])
    gs_pred = np.array([gleason_score_label(predictions[c][0]) for c in cases])

    confusion_rows = []
    matrices = {}
    for scale, ref, pred in (
        (GRADE_GROUP_SCALE, gg_ref, gg_pred),
        (GLEASON_SCORE_SCALE, gs_ref, gs_pred),
    ):
        matrix = confusion(ref, pred, scale)
        matrices[scale.name] = matrix
        for i, ref_label in enumerate(scale.categories):
            for j, pred_label in enumerate(scale.categories):
                confusion_rows.append(
                    {"scale": scale.name, "reference": ref_label, "prediction": pred_label,
                     "count": matrix.counts[i][j]}
                )
    write_table(out / "confusion.csv", "confusion", confusion_rows)
    for name, matrix in matrices.items():
        write_svg(out / f"confusion_{name}.svg", confusion_svg(matrix, f"Confusion on {name}"))

    summary: List[Dict[str, object]] = [
        {"metric": "cases", "value": len(cases)},
        {"metric": "grade_group_accuracy", "value": accuracy(gg_ref, gg_pred)},
        {
            "metric": "grade_group_kappa",
            "value": _kappa_or_none(gg_ref, gg_pred, GRADE_GROUP_SCALE),
        },
        {"metric": "gleason_score_accuracy", "value": accuracy(gs_ref, gs_pred)},
        {
            "metric": "gleason_score_kappa",
            "value": _kappa_or_none(gs_ref, gs_pred, GLEASON_SCORE_SCALE),
        },
    ]

    panel: Dict[str, Dict[str, int]] = {}
    panel_cases: List[str] = []
    if panel_path:
        panel = _panel_labels(load_reads(panel_path), cases)
        panel_cases = [c for c in cases if panel and all(c in labels for labels in panel.values())]
        if len(panel_cases) < len(cases):
            logger.warning(f"Panel covers {len(panel_cases)} of {len(cases)} reference cases")

    roc_rows, bootstrap_rows, point_rows = [], [], []
    for cutoff, (positive_from, score_column) in ROC_CUTOFFS.items():
        truth = gg_ref >= positive_from
        column = 1 if score_column == "malignancy_score" else 2
        scores = np.array([predictions[c][column] for c in cases], dtype=float)
        try:
            curve = roc(scores, truth)
        except SingleClassTruth:
            logger.warning(f"Skipping ROC for cutoff {cutoff}: reference holds a single class")
            continue
        band = bootstrap_roc(scores, truth, replicates, seed, ci_level=config.ci_level)
        roc_rows += [
            {"cutoff": cutoff, "threshold": p.threshold, "sensitivity": p.sensitivity,
             "false_positive_rate": p.false_positive_rate}
            for p in curve.points
        ]
        bootstrap_rows += [
            {"cutoff": cutoff, "fpr": f, "tpr_mean": m, "tpr_lower": lo, "tpr_upper": hi}
            for f, m, lo, hi in zip(band.fpr_grid, band.tpr_mean, band.tpr_lower, band.tpr_upper)
        ]
        youden = youden_threshold(curve)
        points = [("youden", youden)]
        try:
            points.append(
                (
                    f"min_sensitivity_{config.min_sensitivity:g}",
                    operating_point(curve, config.min_sensitivity),
                )
            )
        except Unreachable as e:
            logger.warning(f"Cutoff {cutoff}: {e.detail}")
        for rule, point in points:
            point_rows.append(
                {"cutoff": cutoff, "rule": rule, "threshold": point.threshold,
                 "sensitivity": point.sensitivity, "specificity": point.specificity}
            )
        readers = []
        for reader_id in sorted(panel):
            read_cases = [c for c in cases if c in panel[reader_id]]
            calls = np.array([panel[reader_id][c] >= positive_from for c in read_cases])
            actual = np.array([reference[c].grade_group_label >= positive_from for c in read_cases])
            if not read_cases or actual.all() or not actual.any():
                continue
            sensitivity = float(calls[actual].mean())
            specificity = float((~calls[~actual]).mean())
            readers.append((reader_id, sensitivity, specificity))
            point_rows.append(
                {"cutoff": cutoff, "rule": f"reader:{reader_id}", "threshold": None,
                 "sensitivity": sensitivity, "specificity": specificity}
            )
        summary += [
            {"metric": f"auc_{cutoff}", "value": curve.auc},
            {"metric": f"auc_{cutoff}_mean", "value": band.auc_mean},
            {"metric": f"auc_{cutoff}_lower", "value": band.auc_lower},
            {"metric": f"auc_{cutoff}_upper", "value": band.auc_upper},
            {"metric": f"youden_threshold_{cutoff}", "value": youden.threshold},
            {"metric": f"f1_{cutoff}", "value": f1(truth, scores >= youden.threshold)},
        ]
        write_svg(
            out / f"roc_{cutoff}.svg",
            roc_svg(curve, f"ROC ({cutoff})", band=band, readers=readers),
        )
    write_table(out / "roc.csv", "roc", roc_rows)
    write_table(out / "bootstrap.csv", "bootstrap", bootstrap_rows)
    write_table(out / "operating_points.csv", "operating_points", point_rows)

    if panel and panel_cases:
        _evaluate_panel(out, config, panel, panel_cases, reference, predictions, iterations, seed)
    write_table(out / "summary.csv", "summary", summary)
    return 0


def _evaluate_panel(
    out: Path,
    config: EvaluationConfig,
    panel: Dict[str, Dict[str, int]],
    cases: List[str],
    reference: Dict[str, Verdict],
    predictions: Dict[str, Tuple[Verdict, float, float]],
    iterations: int,
    seed: int,
) -> None:
    ref = [reference[c].grade_group_label for c in cases]
    system = [predictions[c][0].grade_group_label for c in cases]
    labels = {r: [panel[r][c] for c in cases] for r in sorted(panel)}
    raters = {SYSTEM_ID: system, **labels}
    interrater = pairwise_kappa(raters, GRADE_GROUP_SCALE)

    agreement_rows = [
        {
            "reader_id": rater,
            "cases": len(cases),
            "accuracy": accuracy(ref, values),
            "kappa": _kappa_or_none(ref, values, GRADE_GROUP_SCALE),
            "median_interrater_kappa": interrater.median[rater],
        }
        for rater, values in sorted(raters.items())
    ]
    write_table(out / "panel_agreement.csv", "panel_agreement", agreement_rows)
    ids = interrater.rater_ids
    write_table(
        out / "interrater.csv",
        "interrater",
        [
            {"rater_a": ids[i], "rater_b": ids[j], "kappa": interrater.matrix[i][j]}
            for i in range(len(ids))
            for j in range(i + 1, len(ids))
        ],
    )

    groups = {"all": sorted(panel), **config.panel_groups}
    rows = []
    for statistic in PermutationStatistic:
        try:
            results = permutation_by_group(
                system, labels, ref, groups, statistic, iterations, seed, GRADE_GROUP_SCALE
            )
        except DegenerateMarginals as e:
            logger.warning(f"Skipping permutation test {statistic.value}: {e.detail}")
            continue
        for group, result in results.items():
            rows.append(
                {
                    "group": group,
                    "statistic": statistic,
                    "readers": result.readers,
                    "observed": result.observed_statistic,
                    "iterations": result.null_samples,
                    "seed": result.seed,
                    "p_two_tailed": result.p_two_tailed,
                }
            )
    write_table(out / "permutation.csv", "permutation", rows)


# synth


def _synth_case(
    index: int,
    spec: SynthSpec,
    noise: Optional[NoiseModel],
    profile: ThresholdProfile,
    out: Path,
) -> Dict[str, object]:
    case_id = f"case_{index:04d}"
    case_seed = derive_seed(spec.seed, index)
    m, truth = generate(spec.model_copy(update={"seed": case_seed}), profile)
    mask_file = Path("masks") / f"{case_id}.pgm"
    write_pgm(m, out / mask_file)
    if noise is not None:
        noisy = corrupt(m, noise.model_copy(update={"seed": derive_seed(noise.seed, index)}))
        write_pgm(noisy, out / "segmenter" / f"{case_id}.pgm")
    row: Dict[str, object] = {
        "case_id": case_id,
        "mask_file": mask_file.as_posix(),
        "seed": case_seed,
    }
    if truth is None:
        row.update(pct_benign=None, pct_g3=None, pct_g4=None, pct_g5=None, **_verdict_fields(None))
        row["verdict"] = "ungradeable"
        return row
    vp = volume_profile(class_areas(m))
    row.update(
        pct_benign=vp.pct_benign,
        pct_g3=vp.pct_g3,
        pct_g4=vp.pct_g4,
        pct_g5=vp.pct_g5,
        **_verdict_fields(truth.verdict),
    )
    return row


def cmd_synth(
    spec_path: str | Path,
    out: Path,
    count: int,
    noise_path: Optional[str | Path] = None,
    seed: Optional[int] = None,
    profile: str = "biopsy",
) -> int:
    """
    Generate ``count`` synthetic biopsies with ground truth, plus noisy
    segmenter masks when a noise model is given.
    """
    spec = _load_config(SynthSpec, spec_path)
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    noise = None
    if noise_path:
        noise = _load_config(NoiseModel, noise_path)
    inputs = [noise_path] if noise_path else []
    write_manifest(out, "synth", inputs, config_path=spec_path, seed=spec.seed)
    if count == 0:
        return 0
    threshold_profile = load_profile(profile)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    if noise is not None:
        (out / "segmenter").mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        rows = list(
            pool.map(
                lambda i: _synth_case(i, spec, noise, threshold_profile, out), range(count)
            )
        )
    write_table(out / "ground_truth.csv", "ground_truth", rows)
    logger.info(f"Generated {count} synthetic biopsies in {out}")
    return 0
