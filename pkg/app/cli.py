"""
Command line surface.

    run <config.json> [more.json ...] [--out DIR] [--workers N]
    calibrate <config.json> --betas 0.001,0.01,0.1
    check <config.json>
    version
    serve [--host H] [--port P]
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import argparse
import json
import logging
import sys

from . import __version__
from .wave_core.constants import DEFAULTS
from .wave_core.errors import ConfigError, OutputError, WaveCoreError
from .wave_core.harness import calibrate_beta, run_scenario
from .wave_core.results import emit_results, parse_config
from .wave_core.settings import init_logging

logger = logging.getLogger(__name__)


def _parse_betas(text: str) -> List[float]:
    try:
        betas = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"--betas must be comma-separated numbers ({e})") from e
    if not betas:
        raise argparse.ArgumentTypeError("--betas needs at least one value")
    return betas


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdnlse", description="Radiation-damped Schrodinger dynamics in 1D")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and write CSV + JSON results")
    run.add_argument("configs", nargs="+", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory (overrides output.path)")
    run.add_argument("--workers", type=int, default=1)

    cal = sub.add_parser("calibrate", help="sweep beta candidates on a short relaxation")
    cal.add_argument("config", type=Path)
    cal.add_argument("--betas", type=_parse_betas, required=True)

    check = sub.add_parser("check", help="run the identity-residual suite only")
    check.add_argument("config", type=Path)

    sub.add_parser("version", help="print the tool version")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


# -------------------------
# run
# -------------------------

def resolve_output_dirs(configs: Sequence[Path], out: Optional[Path]) -> List[Tuple[Path, Path]]:
    """(config, output dir) pairs; distinct runs must not share an output directory."""
    pairs: List[Tuple[Path, Path]] = []
    for path in configs:
        cfg = parse_config(path)
        if out is None:
            target = Path(cfg.output.path)
        elif len(configs) == 1:
            target = out
        else:
            target = out / path.stem
        pairs.append((path, target))

    seen: Dict[Path, Path] = {}
    for path, target in pairs:
        key = target.resolve()
        if key in seen:
            raise OutputError(f"output collision: {seen[key]} and {path} both write to {target}")
        seen[key] = path
    return pairs


def _run_one(path: Path, out_dir: Path) -> Dict[str, object]:
    cfg = parse_config(path)
    result = run_scenario(cfg)
    emit_results(result, out_dir)
    return {
        "config": str(path),
        "out": str(out_dir),
        "final_eigenstate": result.final_eigenstate,
        "converged": result.converged,
        "consistent": result.consistent,
        "aborted": result.aborted,
    }


RUN_FAILURES = (WaveCoreError, ValueError, OSError)


def _failed(path: Path, out_dir: Path, e: Exception) -> Dict[str, object]:
    logger.error("%s failed: %s", path, e)
    return {"config": str(path), "out": str(out_dir), "error": str(e)}


def cmd_run(args: argparse.Namespace) -> int:
    pairs = resolve_output_dirs(args.configs, args.out)
    logger.info("running %d scenario(s) with %d worker(s)", len(pairs), max(1, args.workers))
    outcomes: List[Dict[str, object]] = []
    if args.workers <= 1 or len(pairs) == 1:
        for path, out in pairs:
            try:
                outcomes.append(_run_one(path, out))
            except RUN_FAILURES as e:
                outcomes.append(_failed(path, out, e))
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [(path, out, pool.submit(_run_one, path, out)) for path, out in pairs]
            for path, out, future in futures:
                try:
                    outcomes.append(future.result())
                except RUN_FAILURES as e:
                    outcomes.append(_failed(path, out, e))
    for outcome in outcomes:
        print(json.dumps(outcome))
    return 1 if any(o.get("aborted") or "error" in o for o in outcomes) else 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    report = calibrate_beta(cfg, args.betas)
    print(json.dumps(report.to_json(), indent=2))
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    result = run_scenario(cfg)
    residuals = result.residual_max.to_json()
    passed = not result.aborted and all(v is not None and v < DEFAULTS.RESIDUAL_TOL for v in residuals.values())
    print(json.dumps({
        "residuals": residuals,
        "tolerance": DEFAULTS.RESIDUAL_TOL,
        "max_norm_drift": result.max_norm_drift,
        "ledger_residual": result.ledger_residual,
        "passed": passed,
    }, indent=2))
    return 0 if passed else 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, log_level=args.log_level.lower())
    return 0


COMMANDS = {
    "run": cmd_run,
    "calibrate": cmd_calibrate,
    "check": cmd_check,
    "serve": cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0

    try:
        init_logging(args.log_level)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RUN_FAILURES as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
