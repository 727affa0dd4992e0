"""Scenario files, parameter sweeps, result records and the result cache.

A scenario is a TOML document with sections ``problem``, ``source``,
``distortions``, ``channel`` and optionally ``run`` and ``sweep``; see the
README for a complete example. Parsing resolves it into a plain dict of
canonical values, and every computation below works from that dict so that
hashing, caching and worker processes all see the same thing.
"""

import copy
import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import tomli

from .jscc import JsccProblem, jscc_bounds_dmc, jscc_exponent_mimo
from .mimo import MimoChannelSpec
from .prob import BITS_PER_NAT
from .ratedist import (DiscreteSemanticSource, DistortionPair, GaussianSourceSpec,
                       InfeasibleDistortionError)

CSV_COLUMNS = ("scenario_hash", "axis_name", "axis_value", "units", "R_lo", "R_hi",
               "R_star", "E_star", "rho_star", "delta_star", "std_error", "wall_ms")
RATE_COLUMNS = ("R_lo", "R_hi", "R_star", "E_star", "std_error")
SWEEP_AXES = ("D_s", "D_x", "SNR", "n", "N_c", "alpha", "t")
CACHE_ENV = "SEMANTIC_JSCC_CACHE_DIR"
CACHE_VERSION = 1
KINDS = ("discrete", "gaussian-mimo")


class ConfigError(ValueError):
    """Unparseable or inconsistent scenario; the message names the field."""


# ---------------------------------------------------------------------------
# parsing


def _field(section, name, key, kind, default=None, required=True):
    where = f"{name}.{key}"
    if key not in section:
        if required and default is None:
            raise ConfigError(f"missing field '{where}'")
        return default
    val = section[key]
    try:
        if kind == "float":
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            return float(val)
        if kind == "int":
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
            return int(val)
        if kind == "str":
            if not isinstance(val, str):
                raise TypeError
            return val
        if kind == "vector":
            return [float(v) for v in val]
        if kind == "matrix":
            rows = [[float(v) for v in row] for row in val]
            if len({len(r) for r in rows}) != 1:
                raise TypeError
            return rows
    except (TypeError, ValueError):
        raise ConfigError(f"field '{where}': expected {kind}, got {val!r}") from None
    raise AssertionError(kind)


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section [{name}]")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be a section")
    return sec


def parse_config(text):
    """Parse scenario text into a canonical dict; raises ConfigError."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    prob = _section(doc, "problem")
    kind = _field(prob, "problem", "kind", "str")
    if kind not in KINDS:
        raise ConfigError(f"field 'problem.kind': expected one of {KINDS}, got {kind!r}")
    cfg = {"kind": kind, "t": _field(prob, "problem", "trans_rate", "float")}
    dist = _section(doc, "distortions")
    cfg["D_s"] = _field(dist, "distortions", "d_s", "float")
    cfg["D_x"] = _field(dist, "distortions", "d_x", "float")
    src = _section(doc, "source")
    ch = _section(doc, "channel")
    if kind == "discrete":
        cfg["source"] = {k: _field(src, "source", k, "matrix" if k != "p_x" else "vector")
                         for k in ("p_x", "p_s_given_x", "d_s", "d_x")}
        cfg["channel"] = {"matrix": _field(ch, "channel", "matrix", "matrix")}
    else:
        if "sigma_x" in src:
            cfg["source"] = {k: _field(src, "source", k, "matrix")
                             for k in ("sigma_x", "h", "sigma_n")}
        else:
            cfg["source"] = {
                "q": _field(src, "source", "q", "int", 1),
                "l": _field(src, "source", "l", "int", 1),
                "var_x": _field(src, "source", "var_x", "float"),
                "var_n": _field(src, "source", "var_n", "float"),
                "h_gain": _field(src, "source", "h_gain", "float"),
            }
        n_t = _field(ch, "channel", "n_t", "int", required=False)
        n_r = _field(ch, "channel", "n_r", "int", required=False)
        n = _field(ch, "channel", "n", "int", required=False)
        if n is not None:
            n_t = n_r = n
        if n_t is None or n_r is None:
            raise ConfigError("field 'channel.n_t'/'channel.n_r' (or 'channel.n') required")
        alpha = _field(ch, "channel", "alpha", "float", 0.0)
        cfg["channel"] = {
            "n_t": n_t, "n_r": n_r,
            "SNR": _field(ch, "channel", "snr", "float"),
            "noise": _field(ch, "channel", "noise", "float", 1.0),
            "N_c": _field(ch, "channel", "n_c", "int", 1),
            "n_b": _field(ch, "channel", "n_b", "int", 1),
            "alpha_t": _field(ch, "channel", "alpha_t", "float", alpha),
            "alpha_r": _field(ch, "channel", "alpha_r", "float", alpha),
        }
    run = _section(doc, "run", required=False)
    cfg["run"] = {
        "method": _field(run, "run", "method", "str", "closed"),
        "n_samples": _field(run, "run", "n_samples", "int", 100_000),
        "seed": _field(run, "run", "seed", "int", required=False),
        "units": _field(run, "run", "units", "str", "nats"),
        "snr_convention": _field(run, "run", "snr_convention", "str", "linear"),
        "grid": _field(run, "run", "grid", "int", 64),
        "bound": _field(run, "run", "bound", "str", "lower"),
    }
    sweep = _section(doc, "sweep", required=False)
    if sweep:
        axis = _field(sweep, "sweep", "axis", "str")
        if axis not in SWEEP_AXES:
            raise ConfigError(f"field 'sweep.axis': unknown axis {axis!r}; "
                              f"expected one of {SWEEP_AXES}")
        if kind == "discrete" and axis not in ("D_s", "D_x", "t"):
            raise ConfigError(f"field 'sweep.axis': {axis!r} needs a MIMO channel")
        cfg["sweep"] = {"axis": axis, "values": _field(sweep, "sweep", "values", "vector")}
        if not cfg["sweep"]["values"]:
            raise ConfigError("field 'sweep.values': empty")
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    run = cfg["run"]
    if run["method"] not in ("closed", "mc"):
        raise ConfigError(f"field 'run.method': expected closed|mc, got {run['method']!r}")
    if run["units"] not in ("nats", "bits"):
        raise ConfigError(f"field 'run.units': expected nats|bits, got {run['units']!r}")
    if run["snr_convention"] not in ("linear", "db"):
        raise ConfigError("field 'run.snr_convention': expected linear|db, "
                          f"got {run['snr_convention']!r}")
    if run["bound"] not in ("upper", "lower"):
        raise ConfigError(f"field 'run.bound': expected upper|lower, got {run['bound']!r}")
    if run["method"] == "mc" and run["seed"] is None:
        raise ConfigError("field 'run.seed': required when method = mc")
    if run["n_samples"] < 2 or run["grid"] < 2:
        raise ConfigError("fields 'run.n_samples' and 'run.grid' must be >= 2")
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def apply_overrides(cfg, seed=None, samples=None, units=None, snr=None, method=None):
    cfg = copy.deepcopy(cfg)
    run = cfg["run"]
    for key, val in (("seed", seed), ("n_samples", samples), ("units", units),
                     ("snr_convention", snr), ("method", method)):
        if val is not None:
            run[key] = val
    return validate_config(cfg)


def with_axis(cfg, axis, value):
    """Copy of ``cfg`` with one sweep axis set to ``value``."""
    cfg = copy.deepcopy(cfg)
    if axis in ("D_s", "D_x", "t"):
        cfg[axis] = float(value)
    elif axis == "SNR":
        cfg["channel"]["SNR"] = float(value)
    elif axis == "n":
        cfg["channel"]["n_t"] = cfg["channel"]["n_r"] = int(value)
    elif axis == "N_c":
        cfg["channel"]["N_c"] = int(value)
    elif axis == "alpha":
        cfg["channel"]["alpha_t"] = cfg["channel"]["alpha_r"] = float(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    cfg.pop("sweep", None)
    return cfg


# ---------------------------------------------------------------------------
# building problems


def snr_linear(cfg):
    snr = cfg["channel"]["SNR"]
    return 10.0 ** (snr / 10.0) if cfg["run"]["snr_convention"] == "db" else snr


def build_channel(cfg):
    ch = cfg["channel"]
    if cfg["kind"] == "discrete":
        return np.array(ch["matrix"])
    correlated = ch["alpha_t"] > 0 or ch["alpha_r"] > 0
    return MimoChannelSpec(
        n_t=ch["n_t"], n_r=ch["n_r"], power=snr_linear(cfg) * ch["noise"],
        noise=ch["noise"], n_c=ch["N_c"], n_b=ch["n_b"],
        fading="exp-correlated" if correlated else "iid-rayleigh",
        alpha_t=ch["alpha_t"], alpha_r=ch["alpha_r"])


def build_problem(cfg):
    src = cfg["source"]
    if cfg["kind"] == "discrete":
        source = DiscreteSemanticSource(src["p_x"], src["p_s_given_x"], src["d_s"], src["d_x"])
    elif "sigma_x" in src:
        source = GaussianSourceSpec(np.array(src["sigma_x"]), np.array(src["h"]),
                                    np.array(src["sigma_n"]))
    else:
        source = GaussianSourceSpec.isotropic(src["q"], src["l"], src["var_x"],
                                              src["var_n"], src["h_gain"])
    return JsccProblem(source, build_channel(cfg), DistortionPair(cfg["D_s"], cfg["D_x"]),
                       cfg["t"])


# ---------------------------------------------------------------------------
# hashing and cache


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def scenario_hash(cfg):
    """Stable hash of the scientific content of a scenario (16 hex chars)."""
    core = {k: v for k, v in cfg.items() if k != "run"}
    core["run"] = {k: cfg["run"][k] for k in
                   ("method", "n_samples", "seed", "snr_convention", "grid", "bound")}
    return hashlib.sha256(_canonical(core).encode()).hexdigest()[:16]


def default_cache_dir():
    env = os.environ.get(CACHE_ENV)
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "semantic_jscc")


class ResultCache:
    """Write-once JSON store keyed by sha256 of a canonical sub-problem.

    Floats are serialized with their shortest round-trip repr, so a hit is
    bit-identical to the value that was stored.
    """

    def __init__(self, root):
        self.root = root

    @staticmethod
    def key(payload):
        return hashlib.sha256(_canonical({"v": CACHE_VERSION, "p": payload}).encode()).hexdigest()

    def _path(self, key):
        return os.path.join(self.root, key[:2], key + ".json")

    def get(self, key):
        try:
            with open(self._path(key), encoding="utf-8") as fh:
                return json.load(fh)
        except (OSError, ValueError):
            return None

    def put(self, key, value):
        path = self._path(key)
        if os.path.exists(path):
            return
        os.makedirs(os.path.dirname(path), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(_canonical(value))
        # concurrent writers race to an identical file; either one may win
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# evaluation and records


@dataclass(frozen=True)
class ResultRecord:
    scenario_hash: str
    axis_name: str
    axis_value: object
    units: str
    R_lo: float
    R_hi: float
    R_star: float
    E_star: float
    rho_star: float
    delta_star: float
    std_error: float
    wall_ms: float

    def converted(self, units):
        """Copy with rate and exponent columns in ``units`` (from nats)."""
        if units == self.units:
            return self
        if (self.units, units) != ("nats", "bits"):
            raise ValueError(f"cannot convert {self.units} to {units}")
        vals = {c: getattr(self, c) for c in CSV_COLUMNS}
        for c in RATE_COLUMNS:
            vals[c] = vals[c] * BITS_PER_NAT
        vals["units"] = units
        return ResultRecord(**vals)


def evaluate_point(cfg):
    """All record values (nats) for one fully specified scenario point."""
    prob = build_problem(cfg)
    run = cfg["run"]
    try:
        return _evaluate(prob, cfg, run)
    except InfeasibleDistortionError:
        # no code meets the distortion pair: zero exponent, no rate interval
        return {"R_lo": math.nan, "R_hi": math.nan, "R_star": math.nan, "E_star": 0.0,
                "rho_star": math.nan, "delta_star": math.nan, "std_error": math.nan}


def _evaluate(prob, cfg, run):
    if cfg["kind"] == "discrete":
        upper, lower = jscc_bounds_dmc(prob, grid=run["grid"])
        rep = upper if run["bound"] == "upper" else lower
    else:
        seed = run["seed"] if run["seed"] is not None else 0
        rep = jscc_exponent_mimo(prob, grid=run["grid"], method=run["method"],
                                 n_samples=run["n_samples"], seed=seed)
    return {
        "R_lo": rep.interval.lo, "R_hi": rep.interval.hi,
        "R_star": rep.r_star, "E_star": rep.e_star,
        "rho_star": rep.rho_star, "delta_star": rep.delta_star,
        "std_error": rep.std_error if cfg["kind"] != "discrete" else math.nan,
    }


def _point_task(args):
    cfg, cache_root = args
    cache = ResultCache(cache_root) if cache_root else None
    key = ResultCache.key({"point": {k: v for k, v in cfg.items() if k != "run"},
                           "run": {k: cfg["run"][k] for k in
                                   ("method", "n_samples", "seed", "snr_convention",
                                    "grid", "bound")}})
    start = time.perf_counter()
    vals = cache.get(key) if cache else None
    if vals is None:
        vals = evaluate_point(cfg)
        if cache:
            cache.put(key, vals)
    vals = dict(vals)
    vals["wall_ms"] = (time.perf_counter() - start) * 1e3
    return vals


def run_scenario(cfg, workers=1, cache_dir=None, timing=False):
    """Evaluate every sweep point (or the single base point) into records.

    Records follow the sweep axis order whatever the completion order. The
    wall-clock column is filled only with ``timing`` so that reruns are
    byte-identical by default.
    """
    h = scenario_hash(cfg)
    if "sweep" in cfg:
        axis = cfg["sweep"]["axis"]
        points = [(v, with_axis(cfg, axis, v)) for v in cfg["sweep"]["values"]]
    else:
        axis = "none"
        points = [("", cfg)]
    tasks = [(p, cache_dir) for _, p in points]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_point_task, tasks))
    else:
        results = [_point_task(t) for t in tasks]
    units = cfg["run"]["units"]
    out = []
    for (value, _), vals in zip(points, results):
        if not timing:
            vals["wall_ms"] = math.nan
        rec = ResultRecord(h, axis, value, "nats", **vals)
        out.append(rec.converted(units))
    return out


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def records_to_csv(records, stamp=None):
    """CSV text; the first line is a comment with the unit/SNR conventions."""
    buf = io.StringIO()
    if stamp:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in stamp.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def csv_stamp(cfg):
    run = cfg["run"]
    return {"units": run["units"], "snr": run["snr_convention"], "method": run["method"]}


def _parse_cell(col, s):
    if col in ("scenario_hash", "axis_name", "units"):
        return s
    if s == "":
        return math.nan
    try:
        return float(s)
    except ValueError:
        if col == "axis_value":
            return s
        raise


def read_records(text):
    """Inverse of ``records_to_csv``; comment lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("not a result CSV (header mismatch)")
    return [ResultRecord(**{c: _parse_cell(c, s) for c, s in zip(CSV_COLUMNS, row)})
            for row in rows[1:]]
