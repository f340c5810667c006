import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, Optional

from services import __version__
from services.cli.schemas import InputDigest, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def input_digest(path: Path) -> InputDigest:
    """Digest one input; an unreadable input is recorded with its error instead."""
    try:
        return InputDigest(path=str(path), sha256=file_digest(path))
    except OSError as e:
        logger.warning(f"Cannot digest input {path}: {e.strerror or e}")
        return InputDigest(path=str(path), error=e.strerror or str(e))


def _expand(paths: Iterable[str | Path]) -> list[Path]:
    files = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p])
    return files


def write_manifest(
    out_dir: Path,
    command: str,
    inputs: Iterable[str | Path],
    config_path: Optional[str | Path] = None,
    seed: Optional[int] = None,
) -> RunManifest:
    """Record what a run read, before it writes anything else."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _expand(inputs)
    if config_path is not None:
        files.append(Path(config_path))
    manifest = RunManifest(
        command=command,
        config_path=str(config_path) if config_path is not None else None,
        inputs=[input_digest(f) for f in files],
        output_dir=str(out_dir),
        seed=seed,
        tool_version=__version__,
    )
    text = json.dumps(manifest.model_dump(), indent=2, sort_keys=True)
    (out_dir / MANIFEST_NAME).write_text(text + "\n", encoding="utf-8")
    return manifest
