"""
2026 Module responsible for the ``gleason-engine`` command line.

Exit codes: 0 success, 1 a domain error (bad input, failed mask), 2 an
internal invariant violation or an unexpected crash.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from services import __version__
from services.cli.commands import cmd_consensus, cmd_evaluate, cmd_grade, cmd_synth
from services.config import get_settings
from services.exceptions import GleasonEngineError

logger = logging.getLogger("services.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gleason-engine",
        description=(
            "Gleason grading from segmentation masks, consensus and reader-study statistics."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Overrides GLEASON_ENGINE_LOG_LEVEL.")
    sub = parser.add_subparsers(dest="command", required=True)

    grade = sub.add_parser("grade", help="Grade label masks into diagnoses.csv.")
    grade.add_argument("masks", nargs="+", type=Path, help="PGM masks or directories of them.")
    grade.add_argument("--profile", default="biopsy", help="biopsy, tma or a JSON profile file.")
    grade.add_argument("--tile-rows", type=int, default=None)
    grade.add_argument("--out", type=Path, required=True)

    consensus = sub.add_parser("consensus", help="Run the consensus protocol over reads.")
    consensus.add_argument("--reads", type=Path, required=True)
    consensus.add_argument("--ihc", type=Path, default=None)
    consensus.add_argument("--out", type=Path, required=True)

    evaluate = sub.add_parser("evaluate", help="Evaluate diagnoses against a reference.")
    evaluate.add_argument("--predictions", type=Path, required=True)
    evaluate.add_argument("--reference", type=Path, required=True)
    evaluate.add_argument("--panel", type=Path, default=None, help="Reads of the reader panel.")
    evaluate.add_argument("--config", type=Path, default=None, help="Evaluation JSON config.")
    evaluate.add_argument("--seed", type=int, default=None)
    evaluate.add_argument("--replicates", type=int, default=None)
    evaluate.add_argument("--iterations", type=int, default=None)
    evaluate.add_argument("--out", type=Path, required=True)

    synth = sub.add_parser("synth", help="Generate synthetic biopsies with ground truth.")
    synth.add_argument("--config", type=Path, required=True, help="Synthetic case JSON spec.")
    synth.add_argument("--noise", type=Path, default=None, help="Segmenter noise JSON model.")
    synth.add_argument("--count", type=int, default=1)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--profile", default="biopsy")
    synth.add_argument("--out", type=Path, required=True)

    serve = sub.add_parser("serve", help="Serve the HTTP API.")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "grade":
        return cmd_grade(args.masks, args.profile, args.out, tile_rows=args.tile_rows)
    if args.command == "consensus":
        return cmd_consensus(args.reads, args.ihc, args.out)
    if args.command == "evaluate":
        return cmd_evaluate(
            args.predictions,
            args.reference,
            args.out,
            panel_path=args.panel,
            config_path=args.config,
            seed=args.seed,
            replicates=args.replicates,
            iterations=args.iterations,
        )
    if args.command == "synth":
        if args.count < 0:
            raise GleasonEngineError("--count must not be negative")
        return cmd_synth(
            args.config,
            args.out,
            args.count,
            noise_path=args.noise,
            seed=args.seed,
            profile=args.profile,
        )
    import uvicorn

    uvicorn.run("services.main:app", host=args.host, port=args.port)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except GleasonEngineError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception:
        logger.exception(f"gleason-engine {args.command} crashed")
        return 2


if __name__ == "__main__":
    sys.exit(main())
