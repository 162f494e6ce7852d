"""Scenario files: parsing, validation, dispatch, CSV and manifest output.

A scenario is one YAML (or JSON) document::

    kind: purify
    master_seed: "5eed"
    output_path: results/purify.csv
    parameters:
      eta: 0.1
      rounds: 10

A run manifest written next to the CSV is itself a valid scenario document,
so ``run --config <csv>.manifest.json`` reproduces the run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__, adversary, filtering, purification, schur, trapdoor, verification
from .adversary import BufferMode, BufferModel, EnsembleKind, EnsembleSpec, JammingSpec
from .keystream import KeystreamSeed
from .qcore import MAX_DIM, seed_bytes, substream

KINDS = ("purify", "filter", "tomography", "trapdoor", "schur")
TOP_LEVEL_KEYS = ("kind", "master_seed", "output_path", "parameters")
OUTPUT_DIR_ENV = "JAMLAB_OUTPUT_DIR"

# heartbeat tomography keeps buffers within 6 qubits (k <= 3 at d = 4, k <= 6 at d = 2)
TOMOGRAPHY_DIM_CAP = 64


class ScenarioError(ValueError):
    """A scenario document failed validation.  ``errors`` lists every problem."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SecretLeakError(RuntimeError):
    pass


# --------------------------------------------------------------------------- #
#                            parameter schemas                                #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Param:
    kind: type
    default: Any = None
    required: bool = False
    lo: float | None = None
    hi: float | None = None
    lo_open: bool = False
    hi_open: bool = False
    choices: tuple | None = None
    pattern: str | None = None

    def range_text(self) -> str:
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{self.lo}, {self.hi}{right}"

    def check(self, name: str, value: Any) -> tuple[Any, str | None]:
        if self.kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                return None, f"{name}: expected an integer, got {value!r}"
        elif self.kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return None, f"{name}: expected a number, got {value!r}"
            value = float(value)
            if not math.isfinite(value):
                return None, f"{name}: must be finite, got {value!r}"
        elif self.kind is str:
            if not isinstance(value, str):
                return None, f"{name}: expected a string, got {value!r}"
        if self.choices is not None and value not in self.choices:
            return None, f"{name}: must be one of {list(self.choices)}, got {value!r}"
        if self.pattern is not None and not re.fullmatch(self.pattern, value):
            return None, f"{name}: {value!r} does not match {self.pattern}"
        if self.lo is not None:
            bad_lo = value <= self.lo if self.lo_open else value < self.lo
            bad_hi = value >= self.hi if self.hi_open else value > self.hi
            if bad_lo or bad_hi:
                return None, f"{name}: {value!r} outside {self.range_text()}"
        return value, None


_ENSEMBLES = tuple(k.value for k in EnsembleKind)

SCHEMAS: dict[str, dict[str, Param]] = {
    "purify": {
        "eta": Param(float, required=True, lo=0.0, hi=1.0, lo_open=True),
        "rounds": Param(int, 10, lo=0, hi=purification.MAX_ROUNDS),
    },
    "filter": {
        "initial": Param(str, "jam", choices=("jam", "jam_visible", "schmidt", "mixed")),
        "eta": Param(float, 0.3, lo=0.0, hi=1.0),
        "weight": Param(float, 0.8, lo=0.0, hi=1.0, lo_open=True, hi_open=True),
        "rounds": Param(int, 10, lo=1, hi=filtering.MAX_ROUNDS),
        "side": Param(str, "alice", choices=tuple(s.value for s in filtering.Side)),
        "eps_deg": Param(float, filtering.EPS_DEG, lo=0.0, hi=1e-3, lo_open=True),
        "marginal_noise": Param(float, 0.0, lo=0.0, hi=1e-3),
    },
    "tomography": {
        "ensemble": Param(str, required=True, choices=_ENSEMBLES),
        "d": Param(int, required=True, lo=1, hi=MAX_DIM),
        "k": Param(int, required=True, lo=1, hi=12),
        "samples": Param(int, 10000, lo=1, hi=10 ** 6),
        "moment_samples": Param(int, 20000, lo=1, hi=10 ** 6),
    },
    "trapdoor": {
        "pairs": Param(int, 256, lo=1, hi=4096),
        "threshold": Param(float, trapdoor.DEFAULT_THRESHOLD, lo=trapdoor.CLASSICAL_WIN,
                           hi=trapdoor.QUANTUM_WIN, lo_open=True, hi_open=True),
        "adversary": Param(str, "separable",
                           pattern=r"separable|singlet|aligned|mixed|jam:(0(\.\d+)?|1(\.0+)?)"),
        "trials": Param(int, 200, lo=100, hi=10 ** 5),
        "mode": Param(str, "both", choices=("real", "ideal", "both")),
    },
    "schur": {
        "pair_dim": Param(int, required=True, lo=1, hi=MAX_DIM),
        "copies": Param(int, required=True, lo=1, hi=12),
        "buffer": Param(str, "global", choices=tuple(m.value for m in BufferMode)),
        "ensemble": Param(str, "haar", choices=_ENSEMBLES),
        "samples": Param(int, 2000, lo=1, hi=10 ** 6),
    },
}


def _cross_checks(kind: str, p: dict) -> list[str]:
    errors = []
    if kind == "tomography":
        d, k = p["d"], p["k"]
        if d ** k > TOMOGRAPHY_DIM_CAP:
            errors.append(f"k: buffer dimension d^k = {d}^{k} exceeds the tomography cap "
                          f"of {TOMOGRAPHY_DIM_CAP}")
        if d & (d - 1):
            errors.append(f"d: heartbeat tomography needs a power of 2, got {d}")
        errors += _ensemble_dim_errors(p["ensemble"], d, "d")
    elif kind == "schur":
        d, k = p["pair_dim"], p["copies"]
        if d ** k > MAX_DIM:
            errors.append(f"copies: buffer dimension d^k = {d}^{k} exceeds the cap of {MAX_DIM}")
        if k > schur.MAX_COPIES:
            errors.append(f"copies: {k} exceeds the symmetrizer limit of {schur.MAX_COPIES}")
        errors += _ensemble_dim_errors(p["ensemble"], d, "pair_dim")
        if p["buffer"] == "global" and p["ensemble"] in ("stabilizer", "phi_plus"):
            errors.append(f"ensemble: {p['ensemble']} has no global buffer form")
        if p["ensemble"] == "binary_phase" and d ** k > 2 ** 12:
            errors.append("ensemble: binary_phase buffers support at most 12 qubits")
    elif kind == "trapdoor":
        if p["adversary"].startswith("jam:"):
            eta = float(p["adversary"][4:])
            if not 0.0 <= eta <= 1.0:
                errors.append(f"adversary: jam eta {eta} outside [0, 1]")
    return errors


def _ensemble_dim_errors(name: str, d: int, key: str) -> list[str]:
    try:
        EnsembleSpec(EnsembleKind(name), d)
    except adversary.ConfigurationError as exc:
        return [f"{key}: {exc}"]
    return []


# --------------------------------------------------------------------------- #
#                              parsing                                        #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    parameters: dict
    master_seed: str
    output_path: str

    def as_dict(self) -> dict:
        return {"kind": self.kind, "master_seed": self.master_seed,
                "output_path": self.output_path, "parameters": dict(self.parameters)}


def default_output_path(kind: str) -> str:
    return str(Path(os.environ.get(OUTPUT_DIR_ENV, "results")) / f"{kind}.csv")


class _ScenarioLoader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, like ``1e-9``."""


_ScenarioLoader.yaml_implicit_resolvers = {
    key: list(value) for key, value in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
_ScenarioLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def parse_scenario(text: str, seed: str | None = None, out: str | None = None) -> ScenarioConfig:
    """Parse and fully validate a scenario document.

    ``seed`` and ``out`` override the document's ``master_seed`` and
    ``output_path``.  Every problem found is reported at once through
    :class:`ScenarioError`.
    """
    try:
        doc = yaml.load(text, Loader=_ScenarioLoader)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"document is not well-formed: {exc}"]) from None
    if isinstance(doc, dict) and "scenario" in doc and "kind" not in doc:
        doc = doc["scenario"]  # a run manifest
    return validate_scenario(doc, seed, out)


def validate_scenario(doc: Any, seed: str | None = None, out: str | None = None) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioError(["document must be a mapping of keys"])
    errors: list[str] = []
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            errors.append(f"{key}: unknown top-level key")

    kind = doc.get("kind")
    if kind is None:
        errors.append("kind: missing")
    elif kind not in KINDS:
        errors.append(f"kind: unknown kind {kind!r}, expected one of {list(KINDS)}")
        kind = None

    master_seed = seed if seed is not None else doc.get("master_seed")
    if isinstance(master_seed, int) and not isinstance(master_seed, bool) and master_seed >= 0:
        # YAML reads an all-digit seed such as 1234 as an integer
        master_seed = str(master_seed)
    if master_seed is None:
        errors.append("master_seed: missing")
    elif not isinstance(master_seed, str) or not re.fullmatch(r"(0x)?[0-9a-fA-F]{1,64}", master_seed):
        errors.append(f"master_seed: expected a hex string of 1-64 digits, got {master_seed!r}")
    else:
        master_seed = master_seed.lower().removeprefix("0x")

    output_path = out if out is not None else doc.get("output_path")
    if output_path is None and kind is not None:
        output_path = default_output_path(kind)
    if output_path is not None and (not isinstance(output_path, str) or not output_path):
        errors.append(f"output_path: expected a non-empty path string, got {output_path!r}")

    raw = doc.get("parameters", {})
    if raw is None:
        raw = {}
    params: dict = {}
    if not isinstance(raw, dict):
        errors.append("parameters: expected a mapping")
    elif kind is not None:
        schema = SCHEMAS[kind]
        for key in raw:
            if key not in schema:
                errors.append(f"{key}: unknown parameter for kind {kind!r}")
        param_errors = []
        for name, spec in schema.items():
            if name not in raw:
                if spec.required:
                    param_errors.append(f"{name}: missing required parameter")
                else:
                    params[name] = spec.default
                continue
            value, err = spec.check(name, raw[name])
            if err:
                param_errors.append(err)
            else:
                params[name] = value
        errors += param_errors
        if not param_errors:
            errors += _cross_checks(kind, params)

    if errors:
        raise ScenarioError(errors)
    return ScenarioConfig(kind, params, master_seed, output_path)


# --------------------------------------------------------------------------- #
#                              running                                        #
# --------------------------------------------------------------------------- #

@dataclass
class RunContext:
    """Hands out labelled substreams and remembers which ones were used."""

    master_seed: str
    labels: list[str] = field(default_factory=list)
    secrets: list[str] = field(default_factory=list)

    def rng(self, label: str, index: int = 0) -> np.random.Generator:
        self.labels.append(f"{label}#{index}")
        return substream(self.master_seed, label, index)

    def keystream(self, label: str) -> KeystreamSeed:
        self.labels.append(f"keystream:{label}")
        digest = hashlib.sha256(
            seed_bytes(self.master_seed) + b"\x00keystream\x00" + label.encode()
        ).digest()
        key = KeystreamSeed(digest[:16])
        self.secrets.append(key.hex())
        return key


@dataclass
class ScenarioResult:
    columns: tuple[str, ...]
    rows: list[dict]
    manifest: dict
    secrets: list[str] = field(default_factory=list)


def _run_purify(p: dict, ctx: RunContext) -> tuple[tuple, list[dict]]:
    traj = purification.run_divergence(p["eta"], p["rounds"])
    return purification.CSV_COLUMNS, traj.rows()


def _run_filter(p: dict, ctx: RunContext) -> tuple[tuple, list[dict]]:
    if p["initial"] == "jam":
        rho0 = adversary.blind_jamming_state(p["eta"])
    elif p["initial"] == "jam_visible":
        rho0 = adversary.jamming_state(JammingSpec(p["eta"]))
    elif p["initial"] == "schmidt":
        rho0 = filtering.schmidt_state(p["weight"])
    else:
        rho0 = np.eye(4, dtype=complex) / 4
    rng = ctx.rng("filter/marginal-noise") if p["marginal_noise"] else None
    traj = filtering.run_filtering(rho0, p["rounds"], filtering.Side(p["side"]),
                                   p["eps_deg"], p["marginal_noise"], rng)
    return filtering.CSV_COLUMNS, traj.rows()


def _run_tomography(p: dict, ctx: RunContext) -> tuple[tuple, list[dict]]:
    spec = EnsembleSpec(EnsembleKind(p["ensemble"]), p["d"])
    res = verification.blindness_experiment(spec, p["k"], p["samples"], ctx.rng("tomography"),
                                            moment_samples=p["moment_samples"])
    return verification.CSV_COLUMNS, [res.row()]


def _run_trapdoor(p: dict, ctx: RunContext) -> tuple[tuple, list[dict]]:
    key = ctx.keystream("trapdoor")
    state = trapdoor.adversary_state(p["adversary"])
    rows = []
    if p["mode"] in ("real", "both"):
        games = trapdoor.run_games(key, p["pairs"], state, p["trials"], p["threshold"],
                                   ctx.rng("trapdoor/real"))
        rows += [_game_row(t, g, "real") for t, g in enumerate(games)]
    if p["mode"] in ("ideal", "both"):
        rng = ctx.rng("trapdoor/ideal")
        games = [trapdoor.ideal_game(p["pairs"], state, p["threshold"], rng)
                 for _ in range(p["trials"])]
        rows += [_game_row(t, g, "ideal") for t, g in enumerate(games)]
    return trapdoor.CSV_COLUMNS, rows


def _game_row(t: int, g: trapdoor.GameVerdict, mode: str) -> dict:
    return {"trial": t, "wins": g.wins, "k": g.k, "win_rate": g.win_rate,
            "accepted": g.accepted, "mode": mode}


def _run_schur(p: dict, ctx: RunContext) -> tuple[tuple, list[dict]]:
    model = BufferModel(BufferMode(p["buffer"]), p["copies"], p["pair_dim"])
    spec = EnsembleSpec(EnsembleKind(p["ensemble"]), p["pair_dim"])
    stats = schur.schur_filter_game(model, spec, p["samples"], ctx.keystream("schur"))
    return schur.CSV_COLUMNS, [stats.row()]


RUNNERS: dict[str, Callable[[dict, RunContext], tuple[tuple, list[dict]]]] = {
    "purify": _run_purify,
    "filter": _run_filter,
    "tomography": _run_tomography,
    "trapdoor": _run_trapdoor,
    "schur": _run_schur,
}


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Run one validated scenario.  Deterministic given the config."""
    ctx = RunContext(config.master_seed)
    start = time.perf_counter()
    columns, rows = RUNNERS[config.kind](config.parameters, ctx)
    duration = time.perf_counter() - start
    manifest = {
        "scenario": config.as_dict(),
        "artifact_version": __version__,
        "master_seed": config.master_seed,
        "substreams": ctx.labels,
        "duration_s": duration,
        "row_count": len(rows),
        "columns": list(columns),
    }
    return ScenarioResult(tuple(columns), rows, manifest, ctx.secrets)


# --------------------------------------------------------------------------- #
#                              output                                         #
# --------------------------------------------------------------------------- #

def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def render_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if set(row) != set(columns):
            raise ValueError(f"record keys {sorted(row)} do not match columns {list(columns)}")
        writer.writerow([format_cell(row[c]) for c in columns])
    return buf.getvalue()


def emit_csv(rows: list[dict], columns: tuple[str, ...], path: str | Path,
             secrets: list[str] | tuple[str, ...] = ()) -> Path:
    """Write records as CSV; refuses to write if any secret appears in the text."""
    text = render_csv(rows, columns)
    lowered = text.lower()
    for s in secrets:
        if s and s.lower() in lowered:
            raise SecretLeakError("refusing to write output containing keystream material")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def manifest_path(csv_path: str | Path) -> Path:
    return Path(str(csv_path) + ".manifest.json")


def write_outputs(result: ScenarioResult, config: ScenarioConfig) -> tuple[Path, Path]:
    csv_path = emit_csv(result.rows, result.columns, config.output_path, result.secrets)
    mpath = manifest_path(csv_path)
    mpath.write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    return csv_path, mpath
