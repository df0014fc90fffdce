"""
Config ingestion and result serialization.

Outputs (deterministic; identical configs give byte-identical files):
- timeseries.csv : one row per sample, fixed column order, 17 significant digits
- summary.json   : final eigenstate, totals, residual maxima, config echo, version
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
import csv
import json
import logging
import math

from pydantic import ValidationError

from .. import __version__
from ..schemas import ScenarioConfig
from .errors import ConfigError, OutputError
from .harness import RunResult
from .observables import ObservableRecord

logger = logging.getLogger(__name__)

CSV_NAME = "timeseries.csv"
SUMMARY_NAME = "summary.json"

BASE_COLUMNS = [
    "t", "norm", "energy", "velocity", "power", "radiated", "work",
    "res_continuity", "res_ehrenfest", "res_ledger", "res_cond24",
]


# -------------------------
# config
# -------------------------

def _format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
        parts.append(f"{loc}: {err.get('msg')}")
    return "; ".join(parts)


def config_from_dict(data: Dict[str, Any], source: str = "<dict>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_format_validation_error(e)}") from e


def parse_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e})") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data, source=str(path))


# -------------------------
# serialization
# -------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _clean(x: Optional[float]) -> Optional[float]:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def csv_header(k_max: int) -> List[str]:
    return BASE_COLUMNS + [f"pop_{n}" for n in range(k_max)]


def csv_row(r: ObservableRecord) -> List[str]:
    base = [
        r.t, r.norm, r.energy, r.velocity, r.power, r.radiated, r.external_work,
        r.res_continuity, r.res_ehrenfest, r.res_ledger, r.res_cond24,
    ]
    return [_num(v) for v in base] + [_num(p) for p in r.populations]


def summarize(result: RunResult) -> Dict[str, Any]:
    last = result.records[-1]
    return {
        "version": __version__,
        "final_eigenstate": result.final_eigenstate,
        "converged": result.converged,
        "consistent": result.consistent,
        "aborted": result.aborted,
        "failure": result.failure,
        "initial_energy": result.initial_energy,
        "final_energy": last.energy,
        "radiated_total": result.radiated_total,
        "work_total": result.work_total,
        "balance_residual": _clean(result.balance_residual),
        "ledger_residual": result.ledger_residual,
        "energies": [float(e) for e in result.energies],
        "final_populations": list(last.populations),
        "residual_max": result.residual_max.to_json(),
        "min_power": result.min_power,
        "recoil_form_gap": result.recoil_form_gap,
        "packet_power_gap": result.packet_power_gap,
        "max_norm_drift": result.max_norm_drift,
        "max_fixed_point_iterations": result.max_iterations,
        "dt_halvings": result.halvings,
        "total_steps": result.total_steps,
        "steps_taken": result.steps_taken,
        "samples": len(result.records),
        "alternation": None if result.alternation is None else result.alternation.to_json(),
        "config": result.config.model_dump(mode="json"),
    }


def emit_results(result: RunResult, path: Union[str, Path]) -> Tuple[Path, Path]:
    out_dir = Path(path)
    csv_path = out_dir / CSV_NAME
    json_path = out_dir / SUMMARY_NAME
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_header(result.config.basis.k_max))
            for record in result.records:
                writer.writerow(csv_row(record))
        json_path.write_text(json.dumps(summarize(result), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"{out_dir}: cannot write results ({e})") from e

    logger.info("wrote %s and %s", csv_path, json_path)
    return csv_path, json_path
