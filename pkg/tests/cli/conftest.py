import json
from pathlib import Path

import numpy as np
import pytest

from services.cli.commands import _verdict_fields
from services.cli.csvio import write_table
from services.grading.schemas import Verdict
from services.raster.mask import encode_mask
from services.raster.pgm import write_pgm

VERDICTS = [
    Verdict.benign(),
    Verdict.of(3, 3),
    Verdict.of(3, 4),
    Verdict.of(4, 3),
    Verdict.of(4, 4),
    Verdict.of(4, 5),
]
CONSENSUS_FIXTURES = Path(__file__).parents[1] / "consensus"


@pytest.fixture
def reads_fixture():
    return CONSENSUS_FIXTURES / "reads_ten_cases.csv"


@pytest.fixture
def ihc_fixture():
    return CONSENSUS_FIXTURES / "ihc_ten_cases.csv"


@pytest.fixture
def mask_dir(tmp_path):
    """Three small masks: benign, 3+4 and 4+4 under the biopsy profile."""
    grids = {
        "b001": [[1, 2, 2, 2], [1, 2, 2, 2], [0, 0, 1, 1]],
        "b002": [[2, 3, 3, 3], [3, 3, 4, 4], [1, 1, 0, 0]],
        "b003": [[4, 4, 4, 4], [2, 4, 4, 1], [1, 1, 0, 0]],
    }
    directory = tmp_path / "masks"
    directory.mkdir()
    for case_id, grid in grids.items():
        write_pgm(encode_mask(grid, 0.96), directory / f"{case_id}.pgm")
    return directory


def diagnosis_row(case_id: str, verdict: Verdict, malignancy: float, aggressiveness: float):
    return {
        "case_id": case_id,
        "pct_benign": None,
        "pct_g3": None,
        "pct_g4": None,
        "pct_g5": None,
        "tumor_fraction": malignancy,
        "malignancy_score": malignancy,
        "aggressiveness_score": aggressiveness,
        "errors": None,
        **_verdict_fields(verdict),
    }


def read_row(case_id: str, reader_id: str, verdict: Verdict, round: int = 1):
    return {
        "case_id": case_id,
        "reader_id": reader_id,
        "round": round,
        "tumor_volume_pct": None,
        "flags": None,
        **_verdict_fields(verdict),
    }


@pytest.fixture
def bundle(tmp_path):
    """
    A 42-case reader study: reference, system diagnoses that miss every
    seventh case by one step, and three readers who each miss a different
    handful of cases.
    """
    rng = np.random.default_rng(42)
    cases = [f"case_{i:03d}" for i in range(42)]
    reference = {c: i % len(VERDICTS) for i, c in enumerate(cases)}
    system = {c: min(v + 1, 5) if i % 7 == 0 else v for i, (c, v) in enumerate(reference.items())}

    diagnoses = []
    for c in cases:
        v = system[c]
        malignancy = 0.02 + 0.15 * v + float(rng.uniform(0, 0.1))
        aggressiveness = 0.0 if v < 2 else 0.1 * v + float(rng.uniform(0, 0.1))
        diagnoses.append(diagnosis_row(c, VERDICTS[v], malignancy, aggressiveness))
    write_table(tmp_path / "predictions.csv", "diagnoses", diagnoses)

    write_table(
        tmp_path / "reference.csv",
        "reference",
        [
            {"case_id": c, "status": "consensus_full", **_verdict_fields(VERDICTS[v])}
            for c, v in reference.items()
        ],
    )

    reads = []
    for r, offset in (("r1", 0), ("r2", 2), ("r3", 4)):
        for i, (c, v) in enumerate(reference.items()):
            label = max(v - 1, 0) if (i + offset) % 5 == 0 else v
            reads.append(read_row(c, r, VERDICTS[label]))
    write_table(tmp_path / "panel.csv", "reads", reads)

    config = tmp_path / "evaluation.json"
    config.write_text(json.dumps({"min_sensitivity": 0.9, "panel_groups": {"pair": ["r1", "r2"]}}))
    return {
        "cases": cases,
        "reference": reference,
        "system": system,
        "diagnoses": diagnoses,
        "predictions": tmp_path / "predictions.csv",
        "reference_path": tmp_path / "reference.csv",
        "panel": tmp_path / "panel.csv",
        "config": config,
    }


@pytest.fixture
def synth_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(
        json.dumps(
            {
                "width": 160,
                "height": 160,
                "gland_count": 24,
                "gland_size_range": [4, 9],
                "target_profile": {
                    "pct_benign": 0.2,
                    "pct_g3": 0.48,
                    "pct_g4": 0.32,
                    "pct_g5": 0.0,
                },
                "seed": 7,
            }
        )
    )
    return path


@pytest.fixture
def noise_model(tmp_path):
    path = tmp_path / "noise.json"
    rows = [[0.85 if i == j else 0.05 for j in range(4)] for i in range(4)]
    path.write_text(json.dumps({"gland_confusion": rows, "boundary_jitter": 1, "seed": 3}))
    return path
