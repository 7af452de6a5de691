"""Dataset files, run configuration and artifact writing.

Dataset files are comma-separated text with the header ``temperature,rate``
and one observation per line. Run configurations are TOML. Every table is
written as a JSON document with a ``schema_version`` field plus an aligned
plain-text rendering; writes go to a temporary file that is then renamed.
"""

from __future__ import annotations

import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .advi import AdviConfig
from .curves import CURVES
from .errors import DegenerateDataset, ValidationError
from .hmc import HmcConfig
from .obs_models import OBS_FAMILIES, Dataset, default_priors, parse_prior

SCHEMA_VERSION = 1
HEADER = "temperature,rate"
NA = "NA"


# --------------------------------------------------------------------------
# datasets


def load_dataset(path) -> Dataset:
    """Read and validate a ``temperature,rate`` file.

    Raises :class:`ValidationError` naming the line of a malformed row or an
    out-of-range rate, and :class:`DegenerateDataset` for fewer than 3 rows.
    Zero rates are allowed and recorded in ``meta["zeros"]``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DegenerateDataset(f"{path}: empty file")
    if lines[0].strip().replace(" ", "") != HEADER:
        raise ValidationError(f"{path}:1: expected header {HEADER!r}, got {lines[0]!r}")
    temps: List[float] = []
    rates: List[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}: {line!r}")
        try:
            t, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not (math.isfinite(t) and math.isfinite(y)):
            raise ValidationError(f"{path}:{lineno}: non-finite value: {line!r}")
        if not 0.0 <= y <= 1.0:
            raise ValidationError(f"{path}:{lineno}: rate {y} outside [0, 1]")
        temps.append(t)
        rates.append(y)
    if len(temps) < 3:
        raise DegenerateDataset(f"{path}: {len(temps)} rows; at least 3 are required")
    data = Dataset(np.array(temps), np.array(rates), {"source": str(path)})
    data.meta["zeros"] = data.zeros
    return data


def format_dataset(data: Dataset) -> str:
    # repr gives the shortest string that round-trips exactly
    rows = [f"{float(t)!r},{float(y)!r}" for t, y in zip(data.temperature, data.rate)]
    return HEADER + "\n" + "\n".join(rows) + "\n"


def save_dataset(data: Dataset, path) -> None:
    atomic_write(path, format_dataset(data))


# --------------------------------------------------------------------------
# atomic writes and tables


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(x):
    """JSON-ready copy: numpy to Python, non-finite floats to the NA token."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else NA
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, doc: Dict[str, Any]) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **_clean(doc)}
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read artifact {path}: {exc}") from exc


def fmt_cell(v, digits: int = 4) -> str:
    if v is None or v == NA:
        return NA
    if isinstance(v, str):
        return v
    v = float(v)
    if not math.isfinite(v):
        return NA
    if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e6):
        return f"{v:.{digits - 1}e}"
    return f"{v:.{digits}g}" if abs(v) < 1 else f"{v:.{max(digits - 3, 1)}f}"


def render_table(columns: Sequence[str], rows: Sequence[Sequence[Any]], title: str = "") -> str:
    """Aligned plain-text table; numbers right-aligned, missing values as NA."""
    cells = [[fmt_cell(v) if not isinstance(v, str) else v for v in r] for r in rows]
    widths = [max(len(str(c)), *(len(r[i]) for r in cells)) if cells else len(str(c))
              for i, c in enumerate(columns)]
    out = [title] if title else []
    out.append("  ".join(str(c).rjust(w) for c, w in zip(columns, widths)))
    out.append("  ".join("-" * w for w in widths))
    for r in cells:
        out.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    return "\n".join(out) + "\n"


def write_table(out_dir, stem: str, columns, rows, title: str = "", extra: Optional[dict] = None) -> None:
    out_dir = Path(out_dir)
    doc = {"title": title, "columns": list(columns), "rows": [list(r) for r in rows]}
    if extra:
        doc.update(extra)
    write_json(out_dir / f"{stem}.json", doc)
    atomic_write(out_dir / f"{stem}.txt", render_table(columns, rows, title))


# --------------------------------------------------------------------------
# run configuration


@dataclass
class EvidenceSettings:
    methods: tuple = ("importance", "bridge", "power_posterior")
    n_is: int = 10000
    n_rungs: int = 20
    ladder_exponent: float = 5.0
    rung_warmup: int = 500
    rung_draws: int = 500
    rung_chains: int = 4
    pp_rule: str = "trapezoid"
    bridge_warp: bool = False
    is_proposal: str = "permute"

    def __post_init__(self):
        unknown = set(self.methods) - {"importance", "bridge", "power_posterior"}
        if unknown:
            raise ValidationError(f"unknown evidence methods {sorted(unknown)}")
        self.methods = tuple(self.methods)


@dataclass
class RunConfig:
    seed: int
    models: List[tuple]
    priors: Dict[str, str] = field(default_factory=dict)
    sampler: HmcConfig = field(default_factory=HmcConfig)
    evidence: EvidenceSettings = field(default_factory=EvidenceSettings)
    advi: List[str] = field(default_factory=list)
    loocv: bool = False
    data: Optional[str] = None
    out: Optional[str] = None
    simulate: dict = field(default_factory=dict)
    ppc: dict = field(default_factory=dict)
    source_text: str = ""

    @property
    def curve(self) -> str:
        return self.models[0][0]

    @property
    def obs(self) -> str:
        return self.models[0][1]


def _parse_model(entry) -> tuple:
    if isinstance(entry, str):
        parts = entry.lower().split("-")
    else:
        parts = [str(e).lower() for e in entry]
    if len(parts) != 2 or parts[0] not in CURVES or parts[1] not in OBS_FAMILIES:
        raise ValidationError(
            f"bad model {entry!r}; use 'curve-obs' with curve in {sorted(CURVES)} and obs in {sorted(OBS_FAMILIES)}"
        )
    return parts[0], parts[1]


def _dataclass_from(cls, table: dict, where: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(table) - known
    if unknown:
        raise ValidationError(f"[{where}]: unknown keys {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ValidationError(f"[{where}]: {exc}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{source}: {exc}") from exc
    allowed = {"seed", "curve", "obs", "models", "priors", "sampler", "evidence", "advi", "criteria", "data",
               "out", "simulate", "ppc"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"{source}: unknown keys {sorted(unknown)}")
    if "seed" not in raw:
        raise ValidationError(f"{source}: 'seed' is required")
    seed = raw["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ValidationError(f"{source}: seed must be an integer in [0, 2^64)")
    if "models" in raw:
        models = [_parse_model(m) for m in raw["models"]]
    elif "curve" in raw and "obs" in raw:
        models = [_parse_model((raw["curve"], raw["obs"]))]
    else:
        raise ValidationError(f"{source}: give 'curve' and 'obs', or a 'models' list")
    priors = {str(k): str(v) for k, v in raw.get("priors", {}).items()}
    for name, text_prior in priors.items():
        parse_prior(text_prior)
    for c, o in models:
        known = set(default_priors(c, o).names())
        extra = set(priors) - known
        if extra and len(models) == 1:
            raise ValidationError(f"{source}: priors for unknown parameters {sorted(extra)} of {c}-{o}")
    sampler = _dataclass_from(HmcConfig, {"seed": seed, **raw.get("sampler", {})}, "sampler")
    evidence = _dataclass_from(EvidenceSettings, raw.get("evidence", {}), "evidence")
    advi = raw.get("advi", {}).get("families", [])
    for fam in advi:
        AdviConfig(family=fam)
    crit = raw.get("criteria", {})
    if set(crit) - {"loocv"}:
        raise ValidationError(f"{source}: [criteria] accepts only 'loocv'")
    return RunConfig(
        seed=seed, models=models, priors=priors, sampler=sampler, evidence=evidence, advi=list(advi),
        loocv=bool(crit.get("loocv", False)), data=raw.get("data"), out=raw.get("out"),
        simulate=dict(raw.get("simulate", {})), ppc=dict(raw.get("ppc", {})), source_text=text,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, str(path))
    base = path.parent
    if cfg.data is not None and not os.path.isabs(cfg.data):
        cfg.data = str(base / cfg.data)
    if cfg.out is not None and not os.path.isabs(cfg.out):
        cfg.out = str(base / cfg.out)
    return cfg
