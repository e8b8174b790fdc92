"""Declarative experiment configs, the runners behind each ``kind``, and reduction.

A config is an INI file::

    [experiment]
    kind = model-b-sweep
    seeds = 0:10
    outputs = runs/model-b

    [parameters]
    n_alpha = 100
    n_beta = 400
    lambdas = 0.05, 0.1, 0.2

Random streams: realization ``seed`` draws its matrix from
``RandomStream(seed, 0)``, basis-pair choices from stream 1, the Poisson
control levels from stream 2 and the j-th reference matrix from stream
``3 + j``. See ``docs/config.md`` for every key.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple
import configparser
import hashlib
import io as _io
import math
import os
import shutil
import subprocess
import time

import numpy as np

from . import __version__
from . import io as qio
from ._accel import BACKEND
from .birthmark import (basis_pair_joints, detect_saturation, qb_prediction, rmt_factor,
                        running_average, thouless_time)
from .dynamics import (basis_state, infinite_time_profile, ipr_series, log_time_grid,
                       participation_series)
from .ensembles import build_model_a, build_model_b, sample_goe, sample_gue
from .errors import ConfigError, CutoffError, InsufficientDataError, QBirthmarkError, ValidationError
from .rng import RandomStream
from .spectral import (density_of_states, eigensolve, heisenberg_time, in_out_ratio,
                       ks_to_wigner, level_spacings, semicircle_deviation)
from . import stadium as st

KINDS = ("goe-factor", "gue-factor", "model-a-sweep", "model-b-sweep", "saturation",
         "stadium", "spectral-characterization", "qb-prediction")

STREAM_MATRIX = 0
STREAM_PAIRS = 1
STREAM_POISSON = 2
STREAM_REFERENCE = 3

_U64_MAX = (1 << 64) - 1


# ------------------------------------------------------------ parameters

def _split(text):
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _as_int(v):
    if isinstance(v, bool):
        raise ValueError("boolean is not an integer")
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _as_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _int_list(v):
    items = v if isinstance(v, (list, tuple)) else _split(v)
    return tuple(_as_int(x) for x in items)


def _float_list(v):
    items = v if isinstance(v, (list, tuple)) else _split(v)
    return tuple(float(x) for x in items)


def _str_list(v):
    items = v if isinstance(v, (list, tuple)) else _split(v)
    return tuple(str(x) for x in items)


@dataclass(frozen=True)
class Param:
    name: str
    convert: Callable
    default: Any
    check: Optional[Callable] = None  # returns an error message or None
    help: str = ""


def _positive(v):
    vals = v if isinstance(v, tuple) else (v,)
    if not vals:
        return "must not be empty"
    return None if all(x > 0 for x in vals) else "must be positive"


def _at_least(k):
    def check(v):
        vals = v if isinstance(v, tuple) else (v,)
        if not vals:
            return "must not be empty"
        return None if all(x >= k for x in vals) else f"must be >= {k}"
    return check


def _nonneg(v):
    vals = v if isinstance(v, tuple) else (v,)
    if not vals:
        return "must not be empty"
    return None if all(x >= 0 and math.isfinite(x) for x in vals) else "must be finite and >= 0"


def _one_of(*choices):
    def check(v):
        vals = v if isinstance(v, tuple) else (v,)
        if not vals:
            return "must not be empty"
        bad = [x for x in vals if x not in choices]
        return None if not bad else f"must be one of {', '.join(choices)} (got {', '.join(bad)})"
    return check


def _fraction(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


_FACTOR = [
    Param("n", _as_int, 600, _at_least(2), "matrix dimension"),
    Param("pairs", _as_int, 50, _at_least(1), "random basis-state pairs per realization"),
]
_BLOCKS = [
    Param("n_alpha", _as_int, 100, _at_least(1), "alpha block size"),
]
_SAT_WINDOW = [
    Param("points", _as_int, 400, _at_least(16), "log-spaced sample times"),
    Param("t_min", float, 0.01, _positive, "first sample time"),
    Param("t_max_heisenberg", float, 50.0, _positive, "last sample time in Heisenberg times"),
    Param("window_fraction", float, 0.5, _positive, "relative saturation window width"),
    Param("epsilon", float, 0.05, _positive, "relative flatness tolerance"),
]
_STADIUM_GEOMETRY = [
    Param("straight_length", float, 2.0, _nonneg, "straight segment L"),
    Param("radius", float, 1.0, _positive, "endcap radius R"),
    Param("nx", _as_int, 512, _at_least(2), "grid points along x (power of two)"),
    Param("ny", _as_int, 256, _at_least(2), "grid points along y (power of two)"),
    Param("extent_x", float, 4.8, _positive, "box width"),
    Param("extent_y", float, 2.8, _positive, "box height"),
    Param("sigma", float, st.DEFAULT_SIGMA, _positive, "wavepacket width"),
    Param("wavelengths", _as_int, st.DEFAULT_WAVELENGTHS, _at_least(1),
          "de Broglie wavelengths across the stadium length"),
    Param("length_unit_nm", float, st.DEFAULT_LENGTH_UNIT_NM, _positive,
          "length unit in nm (time labels only)"),
]

SCHEMAS: Dict[str, List[Param]] = {
    "goe-factor": _FACTOR,
    "gue-factor": _FACTOR,
    "model-a-sweep": _BLOCKS + [
        Param("n_c", _as_int, 1, _at_least(1), "connection width"),
        Param("n_betas", _int_list, (200, 400, 800), _at_least(1), "beta block sizes"),
        Param("site", _as_int, 0, _at_least(0), "initial basis site (in alpha)"),
        Param("exclude_initial", _as_bool, False, None, "drop the initial site from block averages"),
    ],
    "model-b-sweep": _BLOCKS + [
        Param("n_beta", _as_int, 400, _at_least(1), "beta block size"),
        Param("lambdas", _float_list, (0.05, 0.1, 0.2), _nonneg, "coupling scales"),
        Param("control", _as_bool, True, None,
              "add the lambda = 1 ergodic control (initial site always excluded)"),
        Param("site", _as_int, 0, _at_least(0), "initial basis site (in alpha)"),
        Param("exclude_initial", _as_bool, False, None, "drop the initial site from block averages"),
    ],
    "saturation": _BLOCKS + [
        Param("n_beta", _as_int, 400, _at_least(1), "beta block size"),
        Param("models", _str_list, ("a", "b"), _one_of("a", "b"), "which block models"),
        Param("n_c", _as_int, 1, _at_least(1), "model A connection width"),
        Param("lam", float, 0.05, _nonneg, "model B coupling scale"),
        Param("site", _as_int, 0, _at_least(0), "initial basis site (in alpha)"),
    ] + _SAT_WINDOW,
    "stadium": _STADIUM_GEOMETRY + [
        Param("launches", _str_list, ("bouncing_ball", "horizontal_scar", "center_57", "offcenter_123"),
              _one_of("bouncing_ball", "horizontal_scar", "center_57", "offcenter_123"),
              "canonical launch conditions"),
        Param("t_total", float, 1.0, _positive, "propagation time"),
        Param("exclude_fraction", float, 1.0 / 60.0, _fraction, "excluded leading fraction"),
        Param("record_every", _as_int, 10, _at_least(1), "steps between 1/IPR samples"),
        Param("snapshot_times", _float_list, (), None, "times of real-part snapshots"),
        Param("window_fraction", float, 0.5, _positive, "relative saturation window width"),
        Param("epsilon", float, 0.05, _positive, "relative flatness tolerance"),
    ],
    "spectral-characterization": [
        Param("model", str, "goe", _one_of("goe", "a", "b"), "matrix model"),
        Param("n", _as_int, 1000, _at_least(2), "dimension (goe)"),
        Param("n_alpha", _as_int, 100, _at_least(1), "alpha block size (a, b)"),
        Param("n_beta", _as_int, 900, _at_least(1), "beta block size (a, b)"),
        Param("n_c", _as_int, 1, _at_least(1), "model A connection width"),
        Param("lam", float, 0.05, _nonneg, "model B coupling scale"),
        Param("bins", _as_int, 50, _at_least(2), "histogram bins"),
        Param("discard_fraction", float, 0.05, lambda v: None if 0 <= v < 0.5 else "must lie in [0, 0.5)",
              "trimmed fraction at each spectral edge"),
    ],
    "qb-prediction": [
        Param("model", str, "a", _one_of("goe", "a", "b"), "matrix model"),
        Param("n", _as_int, 500, _at_least(2), "dimension (goe)"),
        Param("n_alpha", _as_int, 100, _at_least(1), "alpha block size (a, b)"),
        Param("n_beta", _as_int, 400, _at_least(1), "beta block size (a, b)"),
        Param("n_c", _as_int, 1, _at_least(1), "model A connection width"),
        Param("lam", float, 0.05, _nonneg, "model B coupling scale"),
        Param("taus", _float_list, (2.0, 10.0, 30.0), _positive, "cutoff times"),
        Param("references", _as_int, 5, _at_least(1), "reference GOE matrices"),
        Param("site", _as_int, 0, _at_least(0), "initial site a (b = a)"),
    ],
}


def parse_seeds(spec) -> Tuple[int, ...]:
    """``"0:20"``, ``"1, 4, 9"``, ``"0:3, 7"`` or a list of ints."""
    items = spec if isinstance(spec, (list, tuple)) else _split(spec)
    seeds = []
    for item in items:
        if isinstance(item, str) and ":" in item:
            lo, hi = item.split(":", 1)
            try:
                lo, hi = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"seeds: bad range {item!r}", "seeds") from None
            if hi <= lo:
                raise ConfigError(f"seeds: empty range {item!r}", "seeds")
            seeds.extend(range(lo, hi))
        else:
            try:
                seeds.append(_as_int(item))
            except (TypeError, ValueError):
                raise ConfigError(f"seeds: {item!r} is not an integer", "seeds") from None
    if not seeds:
        raise ConfigError("seeds: at least one seed is required", "seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicate seeds", "seeds")
    for s in seeds:
        if not 0 <= s <= _U64_MAX:
            raise ConfigError(f"seeds: {s} is not an unsigned 64-bit integer", "seeds")
    return tuple(sorted(seeds))


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _seeds_text(seeds):
    return ", ".join(str(s) for s in seeds)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    seeds: Tuple[int, ...] = ()
    outputs: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ConfigError(f"kind: unknown kind {self.kind!r} (expected one of {', '.join(KINDS)})",
                              "kind")
        object.__setattr__(self, "seeds", parse_seeds(self.seeds))
        object.__setattr__(self, "parameters", _validate_parameters(self.kind, self.parameters))
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError(f"jobs: must be a positive integer, got {self.jobs!r}", "jobs")
        object.__setattr__(self, "outputs", str(self.outputs))

    def replace(self, **changes) -> "ExperimentConfig":
        d = dict(kind=self.kind, parameters=dict(self.parameters), seeds=self.seeds,
                 outputs=self.outputs, jobs=self.jobs)
        params = changes.pop("parameters", None)
        if params:
            d["parameters"].update(params)
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        """Plain-JSON form; ``jobs`` is excluded because it cannot change results."""
        return {"kind": self.kind, "seeds": list(self.seeds), "outputs": self.outputs,
                "parameters": {k: list(v) if isinstance(v, tuple) else v
                               for k, v in self.parameters.items()}}

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        unknown = set(d) - {"kind", "seeds", "outputs", "parameters", "jobs"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{key}: unknown top-level key", key)
        if "kind" not in d:
            raise ConfigError("kind: missing", "kind")
        return cls(d["kind"], dict(d.get("parameters", {})), d.get("seeds", ()),
                   d.get("outputs", "runs"), d.get("jobs", 1))

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {"kind": self.kind, "seeds": _seeds_text(self.seeds),
                            "outputs": self.outputs}
        cp["parameters"] = {k: _format_value(v) for k, v in self.parameters.items()}
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, overrides: Optional[dict] = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from exc
        extra = [s for s in cp.sections() if s not in ("experiment", "parameters")]
        if extra:
            raise ConfigError(f"[{extra[0]}]: unknown section", extra[0])
        if not cp.has_section("experiment"):
            raise ConfigError("[experiment]: section missing", "experiment")
        exp = dict(cp["experiment"])
        unknown = set(exp) - {"kind", "seeds", "outputs", "jobs"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{key}: unknown key in [experiment]", key)
        params = dict(cp["parameters"]) if cp.has_section("parameters") else {}
        d = {"kind": exp.get("kind"), "seeds": exp.get("seeds", ""),
             "outputs": exp.get("outputs", "runs"), "parameters": params}
        if "jobs" in exp:
            try:
                d["jobs"] = int(exp["jobs"])
            except ValueError:
                raise ConfigError(f"jobs: {exp['jobs']!r} is not an integer", "jobs") from None
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key in ("kind", "seeds", "outputs", "jobs"):
                d[key] = value
            else:
                d["parameters"][key] = value
        if d["kind"] is None:
            raise ConfigError("kind: missing", "kind")
        return cls.from_dict(d)

    @classmethod
    def from_file(cls, path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror or exc}", "config") from exc
        return cls.from_text(text, overrides)


def _validate_parameters(kind, raw):
    schema = {p.name: p for p in SCHEMAS[kind]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown parameter for kind {kind}", unknown[0])
    out = {}
    for name, p in schema.items():
        value = raw.get(name, p.default)
        try:
            value = p.convert(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}", name) from None
        if p.check is not None:
            msg = p.check(value)
            if msg:
                raise ConfigError(f"{name}: {msg}", name)
        out[name] = value
    _cross_check(kind, out)
    return out


def _cross_check(kind, p):
    """Module preconditions that involve several keys."""
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", key)

    if kind in ("goe-factor", "gue-factor") and p["n"] < 2:
        fail("n", "need at least two sites to form a pair")
    if "site" in p and "n_alpha" in p and kind != "spectral-characterization":
        if kind == "qb-prediction" and p["model"] == "goe":
            if p["site"] >= p["n"]:
                fail("site", f"must be < n = {p['n']}")
        elif p["site"] >= p["n_alpha"]:
            fail("site", f"must lie in the alpha block (< {p['n_alpha']})")
    if kind == "model-a-sweep":
        if p["n_c"] > min((p["n_alpha"],) + p["n_betas"]):
            fail("n_c", "must not exceed min(n_alpha, n_beta)")
        if p["exclude_initial"] and p["n_alpha"] < 2:
            fail("exclude_initial", "alpha block would be empty")
    if kind == "model-b-sweep" and p["exclude_initial"] and p["n_alpha"] < 2:
        fail("exclude_initial", "alpha block would be empty")
    if kind in ("saturation", "spectral-characterization", "qb-prediction"):
        if p.get("model", "a") != "goe" and "n_c" in p and p["n_c"] > min(p["n_alpha"], p["n_beta"]):
            fail("n_c", "must not exceed min(n_alpha, n_beta)")
    if kind == "saturation" and p["t_min"] <= 0:
        fail("t_min", "must be positive")
    if kind == "spectral-characterization":
        n = p["n"] if p["model"] == "goe" else p["n_alpha"] + p["n_beta"]
        kept = n - 2 * int(math.floor(p["discard_fraction"] * n))
        if kept < 50:
            fail("n", f"only {kept} levels survive trimming; need at least 50")
    if kind == "stadium":
        try:
            ss, gs = _stadium_specs(p)
            launches = st.canonical_launches(ss, st.default_k(ss, p["wavelengths"]), p["sigma"])
            for name in p["launches"]:
                dom = st.build_domain(ss, gs, launches[name])
                st.init_wavepacket(launches[name], dom)
        except ValidationError as exc:
            fail("stadium", str(exc))
        for t in p["snapshot_times"]:
            if not 0 <= t <= p["t_total"]:
                fail("snapshot_times", f"{t} outside [0, t_total]")


# ------------------------------------------------------------- reduction

@dataclass(frozen=True)
class EnsembleAverage:
    mean: float
    stderr: float
    n: int

    @property
    def single(self) -> bool:
        """True when ``stderr`` is a placeholder because only one value exists."""
        return self.n == 1


def ensemble_average(values, ids=None) -> EnsembleAverage:
    """Mean and ``std(ddof=1)/sqrt(n)``, summed in ascending ``ids`` order.

    Without ids the values themselves are sorted, so the result does not
    depend on the input order either way.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InsufficientDataError("ensemble_average needs at least one value")
    if ids is None:
        v = np.sort(v, kind="stable")
    else:
        ids = np.asarray(ids).ravel()
        if ids.size != v.size:
            raise ValidationError("ids and values differ in length")
        v = v[np.argsort(ids, kind="stable")]
    mean = math.fsum(v) / v.size
    if v.size == 1:
        return EnsembleAverage(float(mean), 0.0, 1)
    var = math.fsum((v - mean) ** 2) / (v.size - 1)
    return EnsembleAverage(float(mean), math.sqrt(var / v.size), int(v.size))


def ratio_of_means(num, den) -> EnsembleAverage:
    """``mean(num)/mean(den)`` over paired realizations with a delta-method standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    mx, my = math.fsum(num) / n, math.fsum(den) / n
    r = mx / my if my != 0 else math.inf
    if n < 2 or not math.isfinite(r):
        return EnsembleAverage(r, 0.0 if n < 2 else math.nan, n)
    resid = num - r * den
    se = math.sqrt(math.fsum(resid ** 2) / (n - 1) / n) / abs(my)
    return EnsembleAverage(r, se, n)


# -------------------------------------------------------- realizations
# Workers are top-level functions of (params, seed[, extra]) so they pickle.

def _matrix(model, p, seed, **over):
    q = dict(p)
    q.update(over)
    rs = RandomStream(seed, STREAM_MATRIX)
    if model == "goe":
        return sample_goe(q["n"], rs)
    if model == "gue":
        return sample_gue(q["n"], rs)
    if model == "a":
        return build_model_a(q["n_alpha"], q["n_beta"], q["n_c"], rs)
    return build_model_b(q["n_alpha"], q["n_beta"], q["lam"], rs)


def _pairs(n, count, seed):
    u = RandomStream(seed, STREAM_PAIRS).uniforms(2 * count)
    a = np.minimum((u[0::2] * n).astype(np.int64), n - 1)
    b = np.minimum((u[1::2] * (n - 1)).astype(np.int64), n - 2)
    b = b + (b >= a)
    return np.stack([a, b], axis=1)


def _work_factor(p, seed, model):
    h = _matrix(model, p, seed)
    es = eigensolve(h)
    pairs = _pairs(p["n"], p["pairs"], seed)
    paa, pab = basis_pair_joints(es, pairs)
    return {"seed": seed, "pairs": pairs, "p_aa": paa, "p_ab": pab}


def _work_block(p, seed, model, value):
    if model == "a":
        h = _matrix("a", p, seed, n_beta=value)
    else:
        h = _matrix("b", p, seed, lam=value)
    es = eigensolve(h)
    site = p["site"]
    control = model == "b" and value == 1.0 and p["control"]
    exclude = (site,) if p["exclude_initial"] or control else ()
    prof = infinite_time_profile(es, basis_state(h.n, site), p["n_alpha"], exclude)
    return {"seed": seed, "value": value, "p_alpha": prof.block_alpha,
            "p_beta": prof.block_beta, "ratio": prof.ratio}


def _work_saturation(p, seed, model):
    h = _matrix(model, p, seed)
    es = eigensolve(h)
    a0 = basis_state(h.n, p["site"])
    t_h = heisenberg_time(es)
    times = log_time_grid(p["t_min"], p["t_max_heisenberg"] * t_h, p["points"])
    inv = ipr_series(es, a0, times)
    inv = type(inv)(inv.times, 1.0 / inv.values, "inverse_ipr")
    avg = running_average(inv)
    part = participation_series(es, a0, times)

    def sat(ts):
        try:
            return detect_saturation(ts, p["window_fraction"], p["epsilon"])
        except InsufficientDataError:
            return None

    t_ipr = sat(avg)
    t_n = sat(part)
    n_at = float(np.interp(t_n, part.times, part.values)) if t_n is not None else math.nan
    return {"seed": seed, "model": model, "t_heisenberg": t_h, "times": times,
            "inverse_ipr": inv.values, "inverse_ipr_avg": avg.values,
            "participation": part.values, "t_star_ipr": t_ipr, "t_star_n": t_n,
            "n_at_t_star": n_at, "n_max": h.n}


def _poisson_levels(n, seed):
    return np.sort(RandomStream(seed, STREAM_POISSON).uniforms(n)) * n


def _work_spectral(p, seed):
    h = _matrix(p["model"], p, seed)
    es = eigensolve(h)
    radius = 2.0 * math.sqrt(h.n)
    s = level_spacings(es, p["discard_fraction"]).values
    sp = level_spacings(_poisson_levels(h.n, seed), p["discard_fraction"]).values
    out = {"seed": seed, "energies": np.array(es.energies), "spacings": s,
           "ks_wigner": ks_to_wigner(s), "ks_poisson": ks_to_wigner(sp),
           "t_heisenberg": heisenberg_time(es)}
    if p["model"] == "goe":
        out["semicircle_deviation"] = semicircle_deviation(es.energies, radius, p["bins"])
    else:
        out["in_out"] = in_out_ratio(es, p["n_alpha"])
    return out


def _work_qb(p, seed):
    h = _matrix(p["model"], p, seed)
    es = eigensolve(h)
    a = basis_state(h.n, p["site"])
    refs = [eigensolve(sample_goe(h.n, RandomStream(seed, STREAM_REFERENCE + j)))
            for j in range(p["references"])]
    if h.blocks is None:
        t_th = None
        source = "bandwidth"
    else:
        est = thouless_time(h)
        t_th, source = float(est.time), est.source
    actual = basis_pair_joints(es, [(p["site"], p["site"])])[0][0]
    rows = []
    for tau in p["taus"]:
        try:
            q = qb_prediction(es, a, a, tau, refs, t_thouless=t_th)
            rows.append(dict(q.to_dict(), status="ok"))
        except CutoffError:
            rows.append({"tau": tau, "status": "outside-window"})
    return {"seed": seed, "rows": rows, "actual": float(actual), "thouless_source": source}


def _work_stadium(p, name):
    ss, gs = _stadium_specs(p)
    ws = st.canonical_launches(ss, st.default_k(ss, p["wavelengths"]), p["sigma"])[name]
    t_total = p["t_total"]
    run = st.propagate_and_accumulate(ws, ss, gs, t_total, p["exclude_fraction"] * t_total,
                                      p["record_every"], p["snapshot_times"])
    return name, run


def _stadium_specs(p):
    ss = st.StadiumSpec(p["straight_length"], p["radius"])
    gs = st.GridSpec(p["nx"], p["ny"], (p["extent_x"], p["extent_y"]),
                     length_unit_nm=p["length_unit_nm"])
    return ss, gs


def _fanout(fn, tasks, jobs):
    """Run ``fn(*task)`` for every task; results come back in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


# ------------------------------------------------------------ emitters

def _emit_factor(cfg, out, results):
    p = cfg.parameters
    model = "goe" if cfg.kind == "goe-factor" else "gue"
    rows = []
    for r in results:
        for (a, b), paa, pab in zip(r["pairs"], r["p_aa"], r["p_ab"]):
            rows.append((r["seed"], a, b, paa, pab))
    qio.write_csv(out / "realizations.csv", ["seed", "a", "b", "p_aa", "p_ab"], rows)
    seeds = [r["seed"] for r in results]
    m_aa = [float(np.mean(r["p_aa"])) for r in results]
    m_ab = [float(np.mean(r["p_ab"])) for r in results]
    paa = ensemble_average(m_aa, seeds)
    pab = ensemble_average(m_ab, seeds)
    factor = ratio_of_means(np.array(m_aa), np.array(m_ab))
    qio.write_csv(out / "aggregate.csv", ["quantity", "mean", "stderr", "n"], [
        ("p_aa", paa.mean, paa.stderr, paa.n),
        ("p_ab", pab.mean, pab.stderr, pab.n),
        ("factor", factor.mean, factor.stderr, factor.n)])
    return {"factor": factor.mean, "factor_stderr": factor.stderr, "expected": rmt_factor(
        "orthogonal" if model == "goe" else "unitary"), "p_aa": paa.mean, "p_ab": pab.mean,
        "realizations": len(results), "pairs_per_realization": p["pairs"]}


def _emit_block(cfg, out, results, key):
    qio.write_csv(out / "realizations.csv", ["seed", key, "p_alpha", "p_beta", "ratio"],
                  [(r["seed"], r["value"], r["p_alpha"], r["p_beta"], r["ratio"]) for r in results])
    values = sorted({r["value"] for r in results}, key=lambda v: (v == 1.0 and key == "lambda", v))
    rows, summary = [], []
    for v in values:
        rs = sorted((r for r in results if r["value"] == v), key=lambda r: r["seed"])
        pa = np.array([r["p_alpha"] for r in rs])
        pb = np.array([r["p_beta"] for r in rs])
        ratio = ratio_of_means(pa, pb)
        per = ensemble_average([r["ratio"] for r in rs], [r["seed"] for r in rs])
        rows.append((v, ratio.mean, ratio.stderr, per.mean, per.stderr, ratio.n))
        summary.append({key: v, "ratio": ratio.mean, "stderr": ratio.stderr,
                        "mean_of_ratios": per.mean, "n": ratio.n})
    qio.write_csv(out / "aggregate.csv",
                  [key, "ratio", "stderr", "mean_of_ratios", "mean_of_ratios_stderr", "n"], rows)
    return {"rows": summary}


def _emit_saturation(cfg, out, results):
    rows = []
    for r in results:
        qio.write_csv(out / f"series_{r['model']}_seed{r['seed']}.csv",
                      ["time", "inverse_ipr", "inverse_ipr_avg", "participation"],
                      zip(r["times"], r["inverse_ipr"], r["inverse_ipr_avg"], r["participation"]))
        rows.append((r["model"], r["seed"], r["t_heisenberg"], _nan(r["t_star_ipr"]),
                     _nan(r["t_star_n"]), r["n_at_t_star"], r["n_max"]))
    qio.write_csv(out / "realizations.csv", ["model", "seed", "t_heisenberg", "t_star_ipr",
                                             "t_star_n", "n_at_t_star", "n_max"], rows)
    agg, summary = [], {}
    for model in cfg.parameters["models"]:
        rs = [r for r in results if r["model"] == model]
        seeds = [r["seed"] for r in rs]
        entry = {"realizations": len(rs),
                 "detected_ipr": sum(r["t_star_ipr"] is not None for r in rs),
                 "detected_n": sum(r["t_star_n"] is not None for r in rs)}
        for name in ("t_star_ipr", "t_star_n", "n_at_t_star"):
            ok = [(s, r[name]) for s, r in zip(seeds, rs)
                  if r[name] is not None and math.isfinite(r[name])]
            if ok:
                e = ensemble_average([v for _, v in ok], [s for s, _ in ok])
                agg.append((model, name, e.mean, e.stderr, e.n))
                entry[name] = e.mean
            else:
                agg.append((model, name, math.nan, math.nan, 0))
                entry[name] = None
        entry["n_max"] = rs[0]["n_max"]
        summary[model] = entry
    qio.write_csv(out / "aggregate.csv", ["model", "quantity", "mean", "stderr", "n"], agg)
    return summary


def _nan(v):
    return math.nan if v is None else v


def _emit_spectral(cfg, out, results):
    p = cfg.parameters
    seeds = [r["seed"] for r in results]
    rows = []
    for r in results:
        qio.write_csv(out / f"levels_seed{r['seed']}.csv", ["index", "energy", "staircase"],
                      ((i, e, i + 1) for i, e in enumerate(r["energies"])))
        qio.write_csv(out / f"spacings_seed{r['seed']}.csv", ["spacing"], ((s,) for s in r["spacings"]))
        if "in_out" in r:
            qio.write_csv(out / f"in_out_seed{r['seed']}.csv", ["energy", "in_out_ratio"],
                          zip(r["energies"], r["in_out"]))
        rows.append((r["seed"], r["ks_wigner"], r["ks_poisson"], r.get("semicircle_deviation", math.nan),
                     r["t_heisenberg"]))
    qio.write_csv(out / "realizations.csv",
                  ["seed", "ks_wigner", "ks_poisson", "semicircle_deviation", "t_heisenberg"], rows)
    all_e = np.concatenate([r["energies"] for r in results])
    centers, dens = density_of_states(all_e, p["bins"])
    qio.write_csv(out / "dos.csv", ["energy", "density"], zip(centers, dens))
    summary = {}
    agg = []
    for name in ("ks_wigner", "ks_poisson", "semicircle_deviation", "t_heisenberg"):
        vals = [r[name] for r in results if name in r]
        if not vals:
            continue
        e = ensemble_average(vals, seeds)
        agg.append((name, e.mean, e.stderr, e.n))
        summary[name] = e.mean
    pooled = np.concatenate([r["spacings"] for r in results])
    summary["ks_wigner_pooled"] = ks_to_wigner(pooled)
    qio.write_csv(out / "aggregate.csv", ["quantity", "mean", "stderr", "n"], agg)
    return summary


def _emit_qb(cfg, out, results):
    rows = []
    for r in results:
        for row in r["rows"]:
            rows.append((r["seed"], row["tau"], row["status"], row.get("p_rmt", math.nan),
                         row.get("correction", math.nan), row.get("predicted", math.nan),
                         r["actual"], row.get("t_thouless", math.nan), row.get("t_heisenberg", math.nan)))
    qio.write_csv(out / "realizations.csv", ["seed", "tau", "status", "p_rmt", "correction",
                                             "predicted", "actual", "t_thouless", "t_heisenberg"], rows)
    agg, summary = [], []
    actual = ensemble_average([r["actual"] for r in results], [r["seed"] for r in results])
    for tau in cfg.parameters["taus"]:
        ok = [(r["seed"], row) for r in results for row in r["rows"]
              if row["tau"] == tau and row["status"] == "ok"]
        if ok:
            e = ensemble_average([row["predicted"] for _, row in ok], [s for s, _ in ok])
            agg.append((tau, e.mean, e.stderr, e.n, actual.mean, actual.stderr))
            summary.append({"tau": tau, "predicted": e.mean, "stderr": e.stderr, "n": e.n})
        else:
            agg.append((tau, math.nan, math.nan, 0, actual.mean, actual.stderr))
            summary.append({"tau": tau, "predicted": None, "n": 0})
    qio.write_csv(out / "aggregate.csv", ["tau", "predicted", "stderr", "n", "actual", "actual_stderr"], agg)
    return {"rows": summary, "actual": actual.mean, "actual_stderr": actual.stderr,
            "thouless_source": results[0]["thouless_source"]}


def saturated_level(ts, start_fraction=0.5) -> float:
    """Time mean of a recorded series over its last ``1 - start_fraction`` of time."""
    t, v = ts.times, ts.values
    sel = t >= start_fraction * t[-1]
    if sel.sum() < 2:
        return float(v[-1])
    return float(np.trapezoid(v[sel], t[sel]) / (t[sel][-1] - t[sel][0]))


def _emit_stadium(cfg, out, results):
    p = cfg.parameters
    rows, summary = [], {}
    tu = None
    for name, run in results:
        if tu is None:
            tu = st.GridSpec(p["nx"], p["ny"], (p["extent_x"], p["extent_y"]),
                             length_unit_nm=p["length_unit_nm"]).time_unit_fs
        meta = {"window": list(run.density.window), "extent": list(run.density.extent),
                "launch": name, "time_unit_fs": tu}
        qio.write_pgm(out / f"{name}_density.pgm", run.density.values, meta)
        qio.write_pgm(out / f"{name}_density_full.pgm", run.density_full.values,
                      dict(meta, window=list(run.density_full.window)))
        qio.dump_grid(out / f"{name}_density.qbg", run.density.values)
        for ts, snap in sorted(run.snapshots.items()):
            qio.write_pgm(out / f"{name}_snapshot_t{ts:.6g}.pgm", snap, {"time": ts, "launch": name})
        qio.write_timeseries(out / f"{name}_series.csv", run.inverse_ipr, run.participation)
        l1 = float(np.sum(np.abs(run.density.values - run.density_full.values)) * run.density.d_area)

        def sat(ts):
            try:
                return detect_saturation(ts, p["window_fraction"], p["epsilon"])
            except InsufficientDataError:
                return None

        t_ipr = sat(running_average(run.inverse_ipr))
        t_n = sat(run.participation)
        sym = st.symmetry_error(run.density)
        con = st.contrast(run.density)
        level = saturated_level(run.inverse_ipr)
        rows.append((name, sym, con, l1, level, _nan(t_ipr), _nan(t_n), run.max_leakage,
                     run.max_norm_drift, run.steps, run.dt))
        summary[name] = {"symmetry_error": sym, "contrast": con, "l1_exclusion": l1,
                         "saturated_inverse_ipr": level, "t_star_ipr": t_ipr, "t_star_n": t_n,
                         "max_leakage": run.max_leakage, "max_norm_drift": run.max_norm_drift,
                         "steps": run.steps}
    qio.write_csv(out / "summary.csv",
                  ["launch", "symmetry_error", "contrast", "l1_exclusion", "saturated_inverse_ipr",
                   "t_star_ipr", "t_star_n", "max_leakage", "max_norm_drift", "steps", "dt"], rows)
    return {"launches": summary, "time_unit_fs": tu}


# ---------------------------------------------------------------- run

@dataclass
class RunResult:
    config: ExperimentConfig
    out: Path
    summary: dict
    manifest: dict


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                           capture_output=True, text=True, timeout=10)
        if r.returncode == 0 and r.stdout.strip():
            return f"{__version__}+g{r.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _compute(cfg: ExperimentConfig, jobs: int):
    p = cfg.parameters
    seeds = list(cfg.seeds)
    kind = cfg.kind
    if kind in ("goe-factor", "gue-factor"):
        model = "goe" if kind == "goe-factor" else "gue"
        return _fanout(_work_factor, [(p, s, model) for s in seeds], jobs), _emit_factor
    if kind == "model-a-sweep":
        tasks = [(p, s, "a", v) for v in p["n_betas"] for s in seeds]
        return _fanout(_work_block, tasks, jobs), lambda c, o, r: _emit_block(c, o, r, "n_beta")
    if kind == "model-b-sweep":
        lams = p["lambdas"] + ((1.0,) if p["control"] and 1.0 not in p["lambdas"] else ())
        tasks = [(p, s, "b", v) for v in lams for s in seeds]
        return _fanout(_work_block, tasks, jobs), lambda c, o, r: _emit_block(c, o, r, "lambda")
    if kind == "saturation":
        tasks = [(p, s, m) for m in p["models"] for s in seeds]
        return _fanout(_work_saturation, tasks, jobs), _emit_saturation
    if kind == "spectral-characterization":
        return _fanout(_work_spectral, [(p, s) for s in seeds], jobs), _emit_spectral
    if kind == "qb-prediction":
        return _fanout(_work_qb, [(p, s) for s in seeds], jobs), _emit_qb
    if kind == "stadium":
        return _fanout(_work_stadium, [(p, n) for n in p["launches"]], jobs), _emit_stadium
    raise ConfigError(f"kind: unknown kind {kind!r}", "kind")  # pragma: no cover


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


QUARANTINE = "quarantine"
_STAGING = ".staging"


def run(cfg: ExperimentConfig, jobs: Optional[int] = None) -> RunResult:
    """Compute, reduce and emit one experiment into ``cfg.outputs``.

    Files are written to a staging directory first. On success they move into
    the output directory (replacing earlier files of the same name); on any
    exception the staging directory becomes ``<outputs>/quarantine`` together
    with an ``abort.json`` describing the failure, and the exception propagates.
    """
    jobs = cfg.jobs if jobs is None else jobs
    out = qio.ensure_dir(cfg.outputs)
    stage = out / _STAGING
    if stage.exists():
        shutil.rmtree(stage)
    stage.mkdir()
    timings = {}
    t0 = time.perf_counter()
    try:
        results, emit = _compute(cfg, jobs)
        timings["compute_s"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        summary = emit(cfg, stage, results)
        qio.write_json(stage / "summary.json", {"kind": cfg.kind, "results": summary})
        timings["emit_s"] = time.perf_counter() - t1
    except BaseException as exc:
        quarantine = out / QUARANTINE
        if quarantine.exists():
            shutil.rmtree(quarantine)
        stage.rename(quarantine)
        qio.write_json(quarantine / "abort.json", {
            "config": cfg.to_dict(), "error": type(exc).__name__, "message": str(exc)})
        raise
    files = sorted(f.name for f in stage.iterdir())
    for name in files:
        os.replace(stage / name, out / name)
    stage.rmdir()
    timings["total_s"] = time.perf_counter() - t0
    manifest = {"config": cfg.to_dict(), "version": version_string(), "backend": BACKEND,
                "outputs": {name: _sha256(out / name) for name in files},
                "timings": timings}
    qio.write_json(out / "manifest.json", manifest)
    return RunResult(cfg, out, summary, manifest)
