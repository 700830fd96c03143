"""Command line experiment runner.

``geofloquet run CONFIG`` reads an experiment description (INI-style key
tables or JSON), validates it, evaluates the requested computations over
each sweep and writes long-format tables (CSV and/or JSON).
``geofloquet list-models`` dumps the model registry and ``geofloquet verify``
runs a small invariant suite.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import datetime as _dt
import hashlib
import io
import json
import operator
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from . import drives as dv
from .agpsolve import FourierOperator, kato_agp_from_pinv, solve_kato_agp, hfe_kato
from .floquet import DEGENERACY_TOL, classify_drive, solve_floquet
from .kato import (DegeneracyError, GridRefinementError, berry_phases, kato_agp_at,
                   reconstruct_monodromy, solve_kato)
from .spectralflow import (AmbiguousAssignmentError, pair_differences, pair_sectors,
                           photon_index, track)

__all__ = [
    "COMPUTATIONS",
    "OUTPUT_ENV",
    "ConfigError",
    "NumericFailure",
    "Table",
    "load_config",
    "validate_config",
    "run_experiment",
    "verify",
    "main",
]

COMPUTATIONS = ("floquet", "kato", "berry", "agpsolve", "hfe", "classify")
FORMATS = ("csv", "json")
OUTPUT_ENV = "GEOFLOQUET_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3
_FAMILIES = ("afti_hex", "afti_rudner")
_KICKED = ("kicked_mfi", "dtc")


class ConfigError(ValueError):
    """Configuration failed schema or semantic validation."""


class NumericFailure(RuntimeError):
    """A sweep point failed numerically; ``tables`` holds what was computed."""

    def __init__(self, message: str, tables=None, failures=()):
        super().__init__(message)
        self.tables = tables or []
        self.failures = list(failures)


# ---------------------------------------------------------------------------
# configuration

_NUMERICS_DEFAULTS = {
    "steps": None,
    "grid_points": 256,
    "substeps": 64,
    "n_h": 8,
    "tol": 1e-9,
    "degeneracy_tol": DEGENERACY_TOL,
    "seed": 0,
    "track": False,
    "pairing": "none",
    "agp_samples": 16,
}

_PARAM_VALUE = {"type": ["number", "string", "boolean", "null", "array"]}


def _schema() -> dict:
    model_rules = []
    for name, (cls, _) in dv.MODEL_REGISTRY.items():
        props = {f: _PARAM_VALUE for f in cls.__dataclass_fields__}
        model_rules.append({
            "if": {"properties": {"name": {"const": name}}},
            "then": {"properties": {"params": {"type": "object", "properties": props,
                                               "additionalProperties": False}}},
        })
    sweep = {
        "type": "object",
        "properties": {
            "label": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
            "parameter": {"type": "string"},
            "start": {"type": "number"},
            "stop": {"type": "number"},
            "points": {"type": "integer", "minimum": 1},
            "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        },
        "required": ["label", "parameter"],
        "additionalProperties": False,
        "oneOf": [{"required": ["start", "stop", "points"]}, {"required": ["values"]}],
    }
    return {
        "type": "object",
        "properties": {
            "model": {
                "type": "object",
                "properties": {"name": {"enum": sorted(dv.MODEL_REGISTRY)},
                               "params": {"type": "object"}},
                "required": ["name"],
                "additionalProperties": False,
                "allOf": model_rules,
            },
            "computations": {"type": "array", "items": {"enum": list(COMPUTATIONS)},
                             "minItems": 1, "uniqueItems": True},
            "sweeps": {"type": "array", "items": sweep},
            "numerics": {
                "type": "object",
                "properties": {
                    "steps": {"type": ["integer", "null"], "minimum": 1},
                    "grid_points": {"type": "integer", "minimum": 4},
                    "substeps": {"type": "integer", "minimum": 1},
                    "n_h": {"type": "integer", "minimum": 1},
                    "tol": {"type": "number", "exclusiveMinimum": 0},
                    "degeneracy_tol": {"type": "number", "exclusiveMinimum": 0},
                    "seed": {"type": "integer", "minimum": 0},
                    "track": {"type": "boolean"},
                    "pairing": {"enum": ["none", "parity"]},
                    "agp_samples": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
            "output": {
                "type": "object",
                "properties": {
                    "directory": {"type": "string"},
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "formats": {"type": "array", "items": {"enum": list(FORMATS)},
                                "minItems": 1, "uniqueItems": True},
                },
                "additionalProperties": False,
            },
        },
        "required": ["model", "computations"],
        "additionalProperties": False,
    }


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": np.pi}


def _arith(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_arith(node.left), _arith(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_arith(node.operand))
    raise ValueError("not an arithmetic expression")


def _parse_value(text: str):
    """JSON literal, arithmetic in ``pi``, or the raw string."""
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return float(_arith(ast.parse(text, mode="eval").body))
    except (SyntaxError, ValueError, ZeroDivisionError):
        return text


def _split_list(text: str) -> list[str]:
    text = text.strip()
    if text.startswith("["):
        return list(json.loads(text))
    return [x.strip() for x in text.split(",") if x.strip()]


def _from_ini(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # parameter names are case sensitive
    cp.read_string(text)
    cfg: dict[str, Any] = {}
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "model":
            name = items.pop("name", None)
            cfg["model"] = {"params": {k: _parse_value(v) for k, v in items.items()}}
            if name is not None:
                cfg["model"]["name"] = name.strip()
        elif sec == "computations":
            cfg["computations"] = _split_list(items.pop("list", ""))
            if items:
                cfg.setdefault("_unknown", []).extend(f"computations.{k}" for k in items)
        elif sec == "sweep" or sec.startswith("sweep."):
            sw = {k: (_parse_value(v) if k != "parameter" else v.strip()) for k, v in items.items()}
            if "values" in sw and isinstance(sw["values"], str):
                sw["values"] = [_parse_value(x) for x in _split_list(sw["values"])]
            sw["label"] = sec.split(".", 1)[1] if "." in sec else "sweep"
            cfg.setdefault("sweeps", []).append(sw)
        elif sec == "numerics":
            cfg["numerics"] = {k: _parse_value(v) for k, v in items.items()}
        elif sec == "output":
            out: dict[str, Any] = {}
            for k, v in items.items():
                out[k] = _split_list(v) if k == "formats" else v.strip()
            cfg["output"] = out
        else:
            cfg.setdefault("_unknown", []).append(sec)
    return cfg


def load_config(path: str | os.PathLike) -> dict:
    """Read and validate a config file (``.json`` or key-table text)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text) if p.suffix.lower() == ".json" else _from_ini(text)
    except (json.JSONDecodeError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    cfg = validate_config(raw)
    cfg["output"].setdefault("name", p.stem)
    return cfg


def validate_config(raw: dict) -> dict:
    """Schema and semantic checks; returns a normalized copy with defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = raw.get("_unknown")
    if unknown:
        raise ConfigError(f"unknown sections or keys: {unknown}")
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    cfg = json.loads(json.dumps(raw))
    cfg["model"].setdefault("params", {})
    num = dict(_NUMERICS_DEFAULTS)
    num.update(cfg.get("numerics", {}))
    cfg["numerics"] = num
    cfg.setdefault("output", {})
    cfg["output"].setdefault("formats", ["csv"])
    cfg["sweeps"] = cfg.get("sweeps") or [{"label": "point", "parameter": "", "values": [0.0]}]

    name = cfg["model"]["name"]
    cls = dv.MODEL_REGISTRY[name][0]
    labels = [s["label"] for s in cfg["sweeps"]]
    if len(set(labels)) != len(labels):
        raise ConfigError("sweep labels must be unique")
    for sw in cfg["sweeps"]:
        par = sw["parameter"]
        if name in _FAMILIES:
            if par != "kx":
                raise ConfigError(f"model {name} is resolved in k_x; sweep parameter must be 'kx'")
        elif par and par not in cls.__dataclass_fields__:
            raise ConfigError(f"sweep parameter {par!r} is not a parameter of {name}")
        if name not in _FAMILIES and not par and len(_sweep_values(sw)) != 1:
            raise ConfigError("a sweep without parameter must have a single point")
    if "agpsolve" in cfg["computations"] and name in _KICKED:
        raise ConfigError("agpsolve needs a drive with finitely many harmonics; kicked models have none")
    if num["pairing"] == "parity" and name != "dtc":
        raise ConfigError("parity pairing is only defined for the dtc model")
    needs_kato = {"berry", "classify"} & set(cfg["computations"]) or num["pairing"] != "none"
    if needs_kato and "kato" not in cfg["computations"]:
        cfg["computations"].append("kato")
    try:
        _model_at(cfg, cfg["sweeps"][0], _sweep_values(cfg["sweeps"][0])[0])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model parameters rejected: {exc}") from exc
    return cfg


def _sweep_values(sw: dict) -> np.ndarray:
    if "values" in sw:
        return np.asarray(sw["values"], dtype=float)
    return np.linspace(sw["start"], sw["stop"], int(sw["points"]))


def _model_at(cfg: dict, sw: dict, value: float) -> dv.DriveProtocol:
    name = cfg["model"]["name"]
    params = dict(cfg["model"]["params"])
    cls = dv.MODEL_REGISTRY[name][0]
    if "seed" in cls.__dataclass_fields__ and "seed" not in params:
        params["seed"] = cfg["numerics"]["seed"]
    par = sw["parameter"]
    if par and par != "kx":
        params[par] = float(value)
    model = dv.build_model(name, params)
    if name == "afti_hex":
        return model.at(float(value))
    if name == "afti_rudner":
        return model(float(value))
    return model


# ---------------------------------------------------------------------------
# tables


@dataclass
class Table:
    """Long-format table: one row per (point, band, quantity)."""

    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}: {json.dumps(self.meta[k], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [[_jsonable(x) for x in r] for r in self.rows]
        return json.dumps({"columns": self.columns, "rows": rows, "meta": self.meta},
                          sort_keys=True, indent=1) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


# ---------------------------------------------------------------------------
# per-point evaluation


def _evaluate_point(cfg: dict, sw: dict, index: int, value: float) -> dict[str, list[tuple]]:
    """All requested quantities at one sweep point as ``{table: [(band, quantity, value)]}``."""
    num = cfg["numerics"]
    comps = cfg["computations"]
    d = _model_at(cfg, sw, value)
    out: dict[str, list[tuple]] = {}
    sol = solve_floquet(d, steps=num["steps"], grid_points=num["grid_points"],
                        degeneracy_tol=num["degeneracy_tol"], tol=num["tol"])
    if "floquet" in comps:
        rows = []
        for b, th in enumerate(sol.theta_F):
            rows += [(b, "theta_F", th), (b, "eps_F", th / d.period)]
        out["floquet"] = rows
    k = None
    if "kato" in comps:
        k = solve_kato(sol, grid_points=num["grid_points"], steps=num["steps"],
                       substeps=num["substeps"], degeneracy_tol=num["degeneracy_tol"])
        order = np.argsort(k.xi_K, kind="stable")
        ell, ok = photon_index(k.xi_K, k.theta_F / d.period, d.omega)
        rows = []
        for b, n in enumerate(order):
            rows += [(b, "xi_K", k.xi_K[n]), (b, "gamma", k.gamma[n]), (b, "theta_F", k.theta_F[n]),
                     (b, "photon_index", int(ell[n])), (b, "photon_resolved", bool(ok[n])),
                     (b, "consistency", k.consistency[n])]
        rec = float(np.abs(reconstruct_monodromy(k) - sol.monodromy).max())
        rows.append((-1, "factorization_error", rec))
        out["kato"] = rows
        out["_states"] = k.states0[:, order]
        out["_xi"] = k.xi_K[order]
        if num["pairing"] == "parity":
            pairs = pair_sectors(k.states0, d.symmetry, dv.sigma_z_diagonals(int(d.params["L"])))
            diff = pair_differences(pairs, k.theta_F, k.gamma, k.xi_K)
            rows = []
            for i in range(pairs.plus.size):
                rows += [(i, q, diff[q][i]) for q in ("delta_theta", "delta_gamma", "delta_xi")]
                rows.append((i, "pair_weight", pairs.weight[i]))
            out["pairs"] = rows
    if "berry" in comps:
        rows = []
        if k.grid_states is not None:
            g_grid = berry_phases(k.grid_states)
        else:
            g_grid = np.full(k.dim, np.nan)
        for b, n in enumerate(np.argsort(k.xi_K, kind="stable")):
            rows += [(b, "gamma", k.gamma[n]), (b, "gamma_grid", g_grid[n])]
        out["berry"] = rows
    if "agpsolve" in comps:
        h = FourierOperator.from_drive(d, num["n_h"])
        s = solve_kato_agp(h, num["n_h"])
        rows = [(-1, "residual", s.residual), (-1, "normal_residual", s.normal_residual),
                (-1, "rank", s.rank), (-1, "gap_ratio", s.gap_ratio)]
        if k is not None:
            ts = np.arange(num["agp_samples"]) * d.period / num["agp_samples"]
            dist = max(float(np.abs(kato_agp_from_pinv(s, h, t) - kato_agp_at(k, t)).max()) for t in ts)
            rows.append((-1, "distance_to_projector_formula", dist))
        out["agpsolve"] = rows
    if "hfe" in comps:
        r = hfe_kato(d)
        out["hfe"] = [(b, "xi_K0", x) for b, x in enumerate(np.sort(r.xi_K0))]
    if "classify" in comps:
        fam = classify_drive(d, sol, k)
        rows = [(-1, f, bool(getattr(fam, f))) for f in ("equilibrium", "pure_micromotion", "flat", "pure_geometric")]
        rows += [(-1, f"norm_{n}", v) for n, v in sorted(fam.norms.items())]
        out["classify"] = rows
    return out


def _safe_point(cfg, sw, index, value):
    try:
        return index, _evaluate_point(cfg, sw, index, value), None
    except (GridRefinementError, DegeneracyError, AmbiguousAssignmentError,
            np.linalg.LinAlgError, dv.ResourceError, FloatingPointError, ValueError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: dict, threads: int | None = None,
                   progress: Callable[[str], None] | None = None) -> list[Table]:
    """Evaluate every sweep; raises :class:`NumericFailure` with partial tables on failure."""
    threads = threads or os.cpu_count() or 1
    name = cfg["model"]["name"]
    base_meta = {
        "model": name,
        "parameters": cfg["model"]["params"],
        "numerics": cfg["numerics"],
        "version": __version__,
        "code": _git_describe(),
        "seed": cfg["numerics"]["seed"],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    tables: list[Table] = []
    failures: list[dict] = []
    for sw in cfg["sweeps"]:
        values = _sweep_values(sw)
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
            results = list(pool.map(lambda iv: _safe_point(cfg, sw, *iv), enumerate(values)))
        results.sort(key=lambda r: r[0])
        if progress:
            progress(f"sweep {sw['label']}: {len(values)} points in {time.perf_counter() - t0:.1f} s")
        par = sw["parameter"] or "point"
        flagged = [{"index": i, "error": err} for i, _, err in results if err is not None]
        failures += [dict(f, sweep=sw["label"]) for f in flagged]
        good = [(i, r) for i, r, err in results if err is None]
        if cfg["numerics"]["track"] and len(good) > 1:
            try:
                bt = track([values[i] for i, _ in good], [r["_states"] for _, r in good],
                           {"xi": [r["_xi"] for _, r in good]})
            except AmbiguousAssignmentError as exc:
                failures.append({"sweep": sw["label"], "index": int(exc.index), "error": str(exc)})
                bt = track([values[i] for i, _ in good], [r["_states"] for _, r in good],
                           {"xi": [r["_xi"] for _, r in good]}, strict=False)
            for (i, r), idx in zip(good, bt.indices):
                _relabel(r, idx)
        keys = sorted({k for _, r in good for k in r if not k.startswith("_")})
        for key in keys:
            meta = dict(base_meta, sweep=sw["label"], parameter=par, table=key,
                        band_order="tracked" if cfg["numerics"]["track"] else "ascending xi_K" if key in ("kato", "berry") else "ascending theta_F" if key == "floquet" else "index")
            if flagged:
                meta["failed_points"] = flagged
            t = Table(f"{sw['label']}_{key}", ["index", par, "band", "quantity", "value"], meta=meta)
            for i, r in good:
                for band, q, v in r.get(key, []):
                    t.rows.append([i, float(values[i]), band, q, v])
            tables.append(t)
    if failures:
        raise NumericFailure(f"{len(failures)} sweep point(s) failed", tables, failures)
    return tables


def _relabel(r: dict, perm: np.ndarray):
    """Apply a band permutation (from tracking) to the Kato-ordered tables."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    for key in ("kato", "berry"):
        if key in r:
            r[key] = [(int(inv[b]) if b >= 0 else b, q, v) for b, q, v in r[key]]
            r[key].sort(key=lambda x: (x[0] < 0, x[0]))


def write_tables(tables: list[Table], directory: Path, name: str, formats) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in tables:
        for fmt in formats:
            p = directory / f"{name}_{t.name}.{fmt}"
            p.write_text(t.to_csv() if fmt == "csv" else t.to_json(), encoding="utf-8")
            paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# verify


@dataclass
class Check:
    module: str
    invariant: str
    bound: float
    func: Callable[[], float]


def _checks() -> list[Check]:
    from .floquet import solve_floquet as sf
    from .kato import solve_kato as sk
    from .numkernel import eigu, pinv_diagnostic
    from .propagator import propagate

    rng = np.random.default_rng(7)

    def penrose():
        m = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
        m[:, 3] = m[:, 0] + m[:, 1]
        p = pinv_diagnostic(m).pinv
        return float(max(np.abs(m @ p @ m - m).max(), np.abs(p @ m @ p - p).max()))

    def schur_unitary():
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
        e = eigu(q)
        v = e.eigenvectors
        return float(np.abs((v * e.eigenvalues) @ v.conj().T - q).max())

    def mfi_product():
        p = dv.KickedMFIParams(L=4, T=0.1)
        d = dv.kicked_mfi(p)
        h1, h2 = d.segments[0].hamiltonian, d.segments[1].hamiltonian
        from scipy.linalg import expm
        u1 = expm(-1j * p.T * h1 / 4)
        direct = u1 @ expm(-1j * 2 * p.T * h2 / 4) @ u1
        return float(np.abs(propagate(d, 0, p.T) - direct).max())

    xy_p = dv.XYBlochParams(J=0.5)
    xy = dv.xy_bloch(xy_p)

    def xy_phases():
        from .numkernel import expm_antihermitian
        hr = (xy_p.delta_k - xy_p.omega) * dv.TAU["z"] + xy_p.a_k * dv.TAU["x"]
        ref = expm_antihermitian(dv.TAU["z"], xy_p.omega * xy.period) @ expm_antihermitian(hr, xy.period)
        a = np.sort(np.angle(np.linalg.eigvals(propagate(xy, 0, xy.period, 4096))))
        b = np.sort(np.angle(np.linalg.eigvals(ref)))
        return float(np.abs(a - b).max())

    cache: dict[str, Any] = {}

    def xy_kato():
        if "xy" not in cache:
            s = sf(xy, steps=4096)
            cache["xy"] = (s, sk(s))
        return cache["xy"]

    def quasienergies():
        s, _ = xy_kato()
        cf = dv.xy_closed_forms(xy_p, 0.0)
        return float(np.abs(np.sort(s.quasienergies) - np.sort(cf.quasienergies)).max())

    def kato_energies():
        _, k = xy_kato()
        cf = dv.xy_closed_forms(xy_p, 0.0)
        return float(np.abs(np.sort(k.xi_K) - np.sort(cf.kato_energies)).max())

    def factorization():
        d = dv.kicked_mfi(dv.KickedMFIParams(L=6))
        s = sf(d)
        k = sk(s, grid_points=32, substeps=16)
        return float(np.abs(reconstruct_monodromy(k) - s.monodromy).max())

    def gauge_t0():
        _, k = xy_kato()
        s2 = sf(xy, t0=0.37 * xy.period, steps=4096)
        return float(np.abs(np.sort(sk(s2).xi_K) - np.sort(k.xi_K)).max())

    def agp():
        _, k = xy_kato()
        h = FourierOperator.from_drive(xy, 4)
        s = solve_kato_agp(h, 4)
        ts = np.arange(8) * xy.period / 8
        return max(float(np.abs(kato_agp_from_pinv(s, h, t) - kato_agp_at(k, t)).max()) for t in ts)

    def tracking():
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
        perm = rng.permutation(6)
        bt = track([0.0, 1.0], [q, q[:, perm]])
        return float(np.abs(perm[bt.indices[1]] - np.arange(6)).max())

    def determinism():
        cfg = validate_config({"model": {"name": "xy", "params": {"J": 0.5}},
                               "computations": ["floquet", "kato"],
                               "sweeps": [{"label": "s", "parameter": "k", "values": [0.2, 0.4]}],
                               "numerics": {"steps": 512, "grid_points": 64}})
        bodies = []
        for threads in (1, 2):
            ts = run_experiment(cfg, threads)
            bodies.append("".join(t.to_csv().split("\n", len(t.meta))[-1] for t in ts))
        return 0.0 if bodies[0] == bodies[1] else 1.0

    return [
        Check("numkernel", "pseudoinverse Penrose identities", 1e-10, penrose),
        Check("numkernel", "unitary eigendecomposition reconstructs input", 1e-12, schur_unitary),
        Check("drives", "kicked MFI segments reproduce U1 U2 U1", 1e-12, mfi_product),
        Check("propagator", "XY eigenphases vs rotating-frame solution", 1e-9, xy_phases),
        Check("floquet", "XY quasienergies vs closed form", 1e-6, quasienergies),
        Check("kato", "XY Kato energies vs closed form", 1e-6, kato_energies),
        Check("kato", "monodromy factorization (kicked MFI L=6)", 1e-6, factorization),
        Check("kato", "Kato energies independent of gauge time", 1e-7, gauge_t0),
        Check("agpsolve", "pseudoinverse A_K vs projector formula (XY)", 1e-5, agp),
        Check("spectralflow", "tracking undoes a permutation", 0.5, tracking),
        Check("cli", "thread count does not change table bodies", 0.5, determinism),
    ]


def verify(module: str | None = None, tol_scale: float = 1.0, stream=None) -> bool:
    """Run the invariant suite; each check passes when ``observed < tol_scale * bound``."""
    stream = sys.stdout if stream is None else stream
    ok = True
    checks = [c for c in _checks() if module is None or c.module == module]
    if not checks:
        raise ConfigError(f"no checks for module {module!r}")
    for c in checks:
        bound = tol_scale * c.bound
        try:
            obs = c.func()
        except Exception as exc:  # report, do not abort the suite
            obs, note = float("nan"), f" ({type(exc).__name__}: {exc})"
        else:
            note = ""
        passed = bool(obs < bound)
        ok &= passed
        stream.write(f"{'PASS' if passed else 'FAIL'} {c.module}: {c.invariant}: "
                     f"observed {obs:.3e} vs bound {bound:.3e}{note}\n")
    return ok


# ---------------------------------------------------------------------------
# entry point


def _error_record(code: int, kind: str, message: str, **extra) -> str:
    return json.dumps({"status": "error", "exit_code": code, "kind": kind, "message": message, **extra},
                      sort_keys=True, default=str)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(_error_record(EXIT_VALIDATION, "validation", str(exc)), file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out or cfg["output"].get("directory") or os.environ.get(OUTPUT_ENV) or "results")
    name = cfg["output"]["name"]
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]

    def log(msg):
        print(msg, file=sys.stderr)

    try:
        tables = run_experiment(cfg, args.threads, progress=log)
        status = EXIT_OK
        failure = None
    except NumericFailure as exc:
        tables, status, failure = exc.tables, EXIT_NUMERIC, exc
    for t in tables:
        t.meta["config_sha256"] = digest
        if failure is not None:
            t.meta["partial"] = True
    paths = write_tables(tables, out, name, cfg["output"]["formats"])
    for p in paths:
        print(p)
    if failure is not None:
        rec = _error_record(EXIT_NUMERIC, "numeric", str(failure), failures=failure.failures)
        (out / f"{name}_error.json").write_text(rec + "\n", encoding="utf-8")
        print(rec, file=sys.stderr)
    return status


def _cmd_list(args) -> int:
    print(json.dumps(dv.list_models(), indent=2, sort_keys=True, default=str))
    return EXIT_OK


def _cmd_verify(args) -> int:
    try:
        ok = verify(args.filter, args.tol_scale)
    except ConfigError as exc:
        print(_error_record(EXIT_VALIDATION, "validation", str(exc)), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geofloquet", description="Floquet and Kato decompositions of periodic drives")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    r.add_argument("--out", default=None, help=f"output directory (default: config, ${OUTPUT_ENV}, ./results)")
    r.set_defaults(func=_cmd_run)
    m = sub.add_parser("list-models", help="show registered models and default parameters")
    m.set_defaults(func=_cmd_list)
    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--filter", default=None, help="only checks of this module")
    v.add_argument("--tol-scale", type=float, default=1.0, help="multiply every bound (0 forces failure)")
    v.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
