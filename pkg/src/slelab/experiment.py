"""Experiment configs, result records and the op registry behind the CLI.

Configs are flat ``key = value`` text in three sections::

    [experiment]
    name = cardy-demo
    op = sle.cardy-mc
    replicas = 100000
    seed = 1

    [params]
    kappa = 6
    y = 2

    [tolerance]
    k_sigma = 3

Values are typed by their spelling: integers, floats, complex numbers
(``1+1j``), booleans, JSON lists, and strings (quoted when they would
otherwise read as another type).
"""

from __future__ import annotations

import configparser
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import brownian_measures as bm
from . import discrete_models as dm
from . import loewner_engine as le
from . import params_exponents as pe
from . import sle_drivers as sd
from .conformal_core import parse_hull
from .errors import ConfigError
from .rng import RngStream
from .stats import fit_line

# ---------------------------------------------------------------------------
# number formatting


def fmt_float(x: float) -> str:
    """Seventeen significant digits, so every double round-trips; integral values keep a ``.0``."""
    s = format(float(x), ".17g")
    return s + ".0" if s.lstrip("-").isdigit() else s


def _to_jsonable(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become strings."""

    def enc(v, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
            return json.dumps(v)
        if isinstance(v, float):
            return fmt_float(v) if math.isfinite(v) else json.dumps(repr(v))
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(x, depth + 1)}" for k, x in v.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(x, (dict, list)) for x in v):
                return "[" + ", ".join(enc(x, depth + 1) for x in v) + "]"
            return "[\n" + ",\n".join(pad + enc(x, depth + 1) for x in v) + "\n" + end + "]"
        raise TypeError(f"cannot serialise {type(v).__name__}")

    return enc(_to_jsonable(obj), 0) + "\n"


# ---------------------------------------------------------------------------
# config


def parse_value(text: str):
    s = text.strip()
    if s in ("true", "false"):
        return s == "true"
    try:
        v = json.loads(s)
        if isinstance(v, (int, float, str, list)):
            return v
    except ValueError:
        pass
    if "j" in s:
        try:
            return complex(s)
        except ValueError:
            pass
    return s


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, complex):
        return f"({fmt_float(v.real)}{'+' if v.imag >= 0 or math.isnan(v.imag) else '-'}{fmt_float(abs(v.imag))}j)"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(format_value(x) if not isinstance(x, str) else json.dumps(x) for x in v) + "]"
    if isinstance(v, str):
        return v if parse_value(v) == v and v == v.strip() and v else json.dumps(v)
    raise ConfigError(f"unsupported config value {v!r}")


EXPERIMENT_KEYS = {"name", "op", "replicas", "seed", "output"}
TOLERANCE_KEYS = {"k_sigma", "slack"}


@dataclass
class ExperimentConfig:
    name: str
    op: str
    params: dict = field(default_factory=dict)
    replicas: int = 0
    seed: int = 0
    output: str | None = None
    tolerance: dict = field(default_factory=lambda: {"k_sigma": 3.0, "slack": 0.0})

    def __post_init__(self):
        if self.op not in OPS:
            raise ConfigError(f"unknown op {self.op!r}; available: {', '.join(sorted(OPS))}")
        allowed = OPS[self.op].params
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.op}: {', '.join(sorted(unknown))}")
        bad_tol = set(self.tolerance) - TOLERANCE_KEYS
        if bad_tol:
            raise ConfigError(f"unknown tolerance key(s): {', '.join(sorted(bad_tol))}")
        if not isinstance(self.replicas, int) or self.replicas < 0:
            raise ConfigError("replicas must be a non-negative integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if OPS[self.op].stochastic and self.replicas == 0:
            raise ConfigError(f"{self.op} needs replicas > 0")

    def resolved_params(self) -> dict:
        out = dict(OPS[self.op].params)
        out.update(self.params)
        missing = [k for k, v in out.items() if v is REQUIRED]
        if missing:
            raise ConfigError(f"missing parameter(s) for {self.op}: {', '.join(missing)}")
        return out

    def to_text(self) -> str:
        lines = ["[experiment]", f"name = {format_value(self.name)}", f"op = {self.op}",
                 f"replicas = {self.replicas}", f"seed = {self.seed}"]
        if self.output is not None:
            lines.append(f"output = {format_value(self.output)}")
        lines += ["", "[params]"] + [f"{k} = {format_value(v)}" for k, v in self.params.items()]
        lines += ["", "[tolerance]"] + [f"{k} = {format_value(v)}" for k, v in self.tolerance.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        extra = set(cp.sections()) - {"experiment", "params", "tolerance"}
        if extra:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
        if "experiment" not in cp:
            raise ConfigError("config needs an [experiment] section")
        exp = {k: parse_value(v) for k, v in cp["experiment"].items()}
        unknown = set(exp) - EXPERIMENT_KEYS
        if unknown:
            raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(unknown))}")
        if "op" not in exp:
            raise ConfigError("[experiment] needs an op")
        params = {k: parse_value(v) for k, v in cp["params"].items()} if "params" in cp else {}
        tol = {k: parse_value(v) for k, v in cp["tolerance"].items()} if "tolerance" in cp else {}
        tolerance = {"k_sigma": 3.0, "slack": 0.0}
        tolerance.update(tol)
        return cls(name=str(exp.get("name", exp["op"])), op=str(exp["op"]), params=params,
                   replicas=exp.get("replicas", 0), seed=exp.get("seed", 0),
                   output=None if exp.get("output") is None else str(exp["output"]),
                   tolerance=tolerance)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def as_dict(self) -> dict:
        return {"name": self.name, "op": self.op, "params": dict(self.params), "replicas": self.replicas,
                "seed": self.seed, "output": self.output, "tolerance": dict(self.tolerance)}


# ---------------------------------------------------------------------------
# records


@dataclass
class ResultRecord:
    config: dict
    result: dict
    passed: bool | None
    wall_time: float
    version: str = __version__
    status: str = "complete"

    def as_dict(self) -> dict:
        return {"config": self.config, "result": self.result, "passed": self.passed,
                "wall_time": self.wall_time, "version": self.version, "status": self.status}

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def payload_json(self) -> str:
        """Everything except the wall time; identical across runs with the same config."""
        d = self.as_dict()
        d.pop("wall_time")
        return dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        d = json.loads(text)
        return cls(d["config"], d["result"], d["passed"], d["wall_time"],
                   d.get("version", __version__), d.get("status", "complete"))


# ---------------------------------------------------------------------------
# ops

REQUIRED = object()


@dataclass(frozen=True)
class Op:
    fn: Callable[[dict, int, RngStream, int], dict]
    params: dict
    stochastic: bool = True


def _check(result: dict, tol: dict) -> bool | None:
    """Compare ``estimate`` with ``exact`` (scalars or arrays) at ``k_sigma`` standard errors plus ``slack``."""
    if "estimate" not in result or "exact" not in result:
        return None
    est = np.atleast_1d(np.asarray(result["estimate"], dtype=float))
    ex = np.atleast_1d(np.asarray(result["exact"], dtype=float))
    se = np.atleast_1d(np.asarray(result.get("stderr", 0.0), dtype=float))
    return bool(np.all(np.abs(est - ex) <= tol.get("k_sigma", 3.0) * se + tol.get("slack", 0.0)))


def _complex(v) -> complex:
    if isinstance(v, dict):
        return complex(v["re"], v["im"])
    try:
        return complex(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"not a complex number: {v!r}") from exc


def _op_params(p, n, rng, w):
    k = p["kappa"]
    if isinstance(k, str):
        try:
            k = Fraction(k)
        except ValueError as exc:
            raise ConfigError(f"kappa must be a number or fraction, got {p['kappa']!r}") from exc
    sp = pe.derive_params(k)
    out = {key: float(v) for key, v in sp.as_dict().items()}
    if isinstance(k, (int, Fraction)):
        out["exact"] = {key: str(Fraction(v)) for key, v in sp.as_dict().items()}
    return {"params": out}


def _op_conformal_hcap(p, n, rng, w):
    hull = parse_hull(p["hull"])
    return {"hull": hull.spec_string(), "hcap": hull.hcap, "rad": hull.rad}


def _op_bm_hcap(p, n, rng, w):
    hull = parse_hull(p["hull"])
    est = bm.hcap_mc(hull, n, rng)
    return {"hull": hull.spec_string(), "estimate": est.estimate, "stderr": est.stderr, "exact": hull.hcap}


def _op_bubble(p, n, rng, w):
    hull = parse_hull(p["hull"])
    est = bm.bubble_gamma_integral(hull, n, rng)
    return {"hull": hull.spec_string(), "estimate": est.estimate, "stderr": est.stderr,
            "exact": bm.bubble_schwarzian(hull), "quadrature": est.extra.get("quadrature")}


def _op_beurling(p, n, rng, w):
    res = bm.beurling_mc(list(p["eps"]), n, rng, workers=w)
    return {"eps": res.eps, "prob": res.prob, "stderr": res.stderr, "exact_prob": res.exact,
            "exponent": res.exponent, "exponent_stderr": res.exponent_stderr,
            "estimate": res.exponent, "exact": 0.5}


def _op_loops(p, n, rng, w):
    s = bm.sample_rooted_loops(tuple(p["box"]), n, rng, p["s_min"], p["s_max"], p["points"])
    return {"total_mass": s.total_mass, "long_tail_mass": s.long_tail_mass, "count": len(s.loops),
            "weight": s.total_mass / len(s.loops), "s_min": s.s_min, "s_max": s.s_max,
            "durations": [l.duration for l in s.loops]}


def _op_cardy(p, n, rng, w):
    a = 2 / p["kappa"]
    est = sd.cardy_hitting_mc(p["kappa"], p["y"], n, rng, dt=p["dt"], workers=w)
    return {"y": p["y"], "estimate": est.estimate, "stderr": est.stderr, "exact": pe.cardy_phi(p["y"], a)}


def _op_green_tail(p, n, rng, w):
    z = _complex(p["z"])
    res = sd.green_tail_mc(p["kappa"], z, list(p["deltas"]), n, rng, dtau=p["dtau"], workers=w)
    target = 2 - float(pe.derive_params(p["kappa"]).d_dim)
    return {"deltas": res.deltas, "prob": res.prob, "prob_stderr": res.stderr,
            "exponent": res.exponent, "exponent_stderr": res.exponent_stderr, "censored": res.censored,
            "estimate": res.exponent, "stderr": res.exponent_stderr, "exact": target}


def _op_exponent_fit(p, n, rng, w):
    a = 2 / p["kappa"]
    lam = p["lam"]
    kind = p["kind"]
    if kind == "boundary":
        times = np.geomspace(p["tmin"], p["tmax"], p["points"])
        res = sd.boundary_moment(lam, a, times, p["x"], n, rng, workers=w)
        target = -pe.q_exponent(lam, a) / 2
        x = np.log(times)
        est, se = res.slope, res.slope_stderr
    elif kind == "radial":
        times = np.linspace(p["tmin"], p["tmax"], p["points"])
        res = sd.radial_moment(lam, a, p["theta"], times, n, rng, workers=w)
        target = pe.radial_beta(lam, a)
        x = times
        est, se = res.extra["beta"], res.extra["beta_stderr"]
    else:
        raise ConfigError(f"unknown exponent-fit kind {kind!r}; use boundary or radial")
    y = np.log(res.mean)
    fit = fit_line(x, y)
    return {"kind": kind, "times": times, "mean": res.mean, "mean_stderr": res.stderr,
            "martingale": res.martingale, "martingale_stderr": res.martingale_stderr,
            "fit_x": x, "fit_y": y, "fit_line": fit.intercept + fit.slope * x,
            "slope": res.slope, "estimate": est, "stderr": se, "exact": target}


def _op_bessel(p, n, rng, w):
    est = sd.bessel_hit_probability(p["a"], p["x"], p["horizon"], n, rng, method=p["method"], workers=w)
    return {"estimate": est.estimate, "stderr": est.stderr,
            "exact": sd.bessel_hit_probability_exact(p["a"], p["x"], p["horizon"])}


def _op_restriction(p, n, rng, w):
    hull = parse_hull(p["hull"])
    est = sd.restriction_mc(hull, n, rng, kappa=p["kappa"], workers=w)
    exact = pe.restriction_probability(_halfdisk_phi_prime(hull)) if hull.kind == "halfdisk" else None
    out = {"hull": hull.spec_string(), "estimate": est.estimate, "stderr": est.stderr}
    out.update({k: v for k, v in est.extra.items()})
    if exact is not None:
        out["exact"] = exact
    return out


def _halfdisk_phi_prime(hull) -> float:
    # removal map z + r^2/(z - x0) shifted to fix 0 has derivative 1 - r^2/x0^2 there
    return 1 - hull.size ** 2 / hull.x0 ** 2


def _op_sle_sample(p, n, rng, w):
    hull = parse_hull(p["hull"]) if p["hull"] else None
    driver = sd.DriverSpec(p["kind"], p["kappa"], p["dt"], p["steps"], rho=p["rho"],
                         force_point=p["force_point"], target=_complex(p["target"]), hull=hull)
    res = sd.sample_driver(driver, rng)
    out = {"kind": p["kind"], "dt": p["dt"], "driving": res.path.values,
           "truncated_at": res.truncated_at, "absorbed": res.absorbed}
    if res.force_point is not None:
        out["force_point"] = res.force_point
    return out


def _op_trace(p, n, rng, w):
    a = 2 / p["kappa"]
    if p["driving"] == "brownian":
        path = sd.sample_chordal_driver(p["kappa"], p["dt"], p["steps"], rng)
        path = le.DrivingPath(a, p["dt"], path.values, p["interpolation"])
    else:
        vals = read_driving_file(p["driving"])
        path = le.DrivingPath(a, p["dt"], vals, p["interpolation"])
    tr = le.reverse_trace(path, p["tip_eps"] if p["tip_eps"] is not None else None)
    return {"tip_eps": tr.tip_eps, "trace": [list(r) for r in tr.to_rows()],
            "chain": [list(r) for r in le.SlitMapChain.from_path(path).to_rows()]}


def _op_saw(p, n, rng, w):
    counts = dm.saw_counts(p["n"])
    b = dm.connective_bounds(p["n"]) if p["n"] >= 1 else None
    out = {"n": p["n"], "count": counts[-1], "counts": counts}
    if b is not None:
        out.update({"lower": b.lower, "upper": b.upper})
    return out


def _op_lerw(p, n, rng, w):
    size = p["size"]
    mask = dm.box_domain(size)
    start = tuple(p["start"]) if p["start"] else (size // 2, size // 2)
    path = dm.sample_lerw(mask, start, rng)
    return {"size": size, "start": list(start), "length": len(path), "points": path.points}


def _op_perc(p, n, rng, w):
    xs = p["x"] if isinstance(p["x"], list) else [p["x"]]
    res = dm.triangle_crossing_mc(xs, p["size"], n, rng, workers=w)
    return {"x": xs, "estimate": [r.floor.estimate for r in res], "estimate_ceil": [r.ceil.estimate for r in res],
            "stderr": [r.floor.stderr for r in res], "exact": xs}


OPS: dict[str, Op] = {
    "params": Op(_op_params, {"kappa": REQUIRED}, stochastic=False),
    "conformal.hcap": Op(_op_conformal_hcap, {"hull": REQUIRED}, stochastic=False),
    "bm.hcap": Op(_op_bm_hcap, {"hull": REQUIRED}),
    "bm.bubble": Op(_op_bubble, {"hull": REQUIRED}),
    "bm.beurling": Op(_op_beurling, {"eps": [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125]}),
    "bm.loops": Op(_op_loops, {"box": [0.0, 1.0, 0.0, 1.0], "s_min": 1e-3, "s_max": 1e2, "points": 256}),
    "sle.cardy-mc": Op(_op_cardy, {"kappa": 6.0, "y": REQUIRED, "dt": 1e-4}),
    "sle.green-tail": Op(_op_green_tail, {"kappa": 8 / 3, "z": 1j, "deltas": [0.2, 0.1, 0.05, 0.025],
                                          "dtau": 1e-3}),
    "sle.exponent-fit": Op(_op_exponent_fit, {"kind": "boundary", "kappa": 8 / 3, "lam": 1.0, "x": 1.0,
                                              "theta": math.pi / 2, "tmin": 10.0, "tmax": 1000.0, "points": 9}),
    "sle.bessel": Op(_op_bessel, {"a": REQUIRED, "x": 1.0, "horizon": 1e4, "method": "exact"}),
    "sle.restriction": Op(_op_restriction, {"hull": "halfdisk:2,0.5", "kappa": 8 / 3}),
    "sle.sample": Op(_op_sle_sample, {"kind": "chordal", "kappa": REQUIRED, "dt": 1e-3, "steps": 1000,
                                      "rho": 0.0, "force_point": 1.0, "target": 1j, "hull": ""},
                     stochastic=False),
    "loewner.trace": Op(_op_trace, {"driving": "brownian", "kappa": REQUIRED, "steps": 1000, "dt": 1e-3,
                                    "tip_eps": None, "interpolation": "sqrt"}, stochastic=False),
    "lattice.saw-count": Op(_op_saw, {"n": REQUIRED}, stochastic=False),
    "lattice.lerw": Op(_op_lerw, {"size": 64, "start": None}, stochastic=False),
    "lattice.perc-cross": Op(_op_perc, {"x": REQUIRED, "size": 256}),
}


def read_driving_file(path: str) -> np.ndarray:
    """Driving values from a text file: one value per line, or ``t,u`` rows (header allowed)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read driving file {path}: {exc}") from exc
    vals = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            vals.append(float(cells[-1]))
        except ValueError:
            if vals:
                raise ConfigError(f"bad driving value {line!r}")
    if len(vals) < 2:
        raise ConfigError("driving file needs at least two values")
    return np.array(vals)


def default_workers() -> int:
    env = os.environ.get("SLELAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"SLELAB_WORKERS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError("SLELAB_WORKERS must be positive")
        return n
    return os.cpu_count() or 1


def output_path(path: str | None) -> Path | None:
    """Resolve relative output paths against ``SLELAB_OUTDIR`` when it is set."""
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get("SLELAB_OUTDIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ResultRecord:
    op = OPS[config.op]
    params = config.resolved_params()
    w = default_workers() if workers is None else workers
    rng = RngStream(config.seed)
    t0 = time.perf_counter()
    try:
        result = op.fn(params, config.replicas, rng, w)
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"invalid parameter type: {exc}") from exc
    result = _to_jsonable(result)
    return ResultRecord(_to_jsonable(config.as_dict()), result, _check(result, config.tolerance),
                        time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# plot data


PLOT_KINDS = {"trace": ("t", "re", "im"), "tail": ("delta", "p", "stderr"), "fit": ("x", "y", "fit")}


def plot_rows(record: dict, kind: str) -> tuple[tuple[str, ...], list, list[str]]:
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; available: {', '.join(PLOT_KINDS)}")
    res = record.get("result", {}) if record else {}
    footer = []
    if kind == "trace":
        rows = res.get("trace", [])
    elif kind == "tail":
        rows = list(zip(res.get("deltas", []), res.get("prob", []), res.get("prob_stderr", [])))
        if "exponent" in res:
            footer.append(f"# exponent={fmt_float(res['exponent'])} stderr={fmt_float(res['exponent_stderr'])}")
    else:
        rows = list(zip(res.get("fit_x", []), res.get("fit_y", []), res.get("fit_line", [])))
    return PLOT_KINDS[kind], rows, footer


def infer_plot_kind(record: dict) -> str:
    res = record.get("result", {}) if record else {}
    if "trace" in res:
        return "trace"
    if "deltas" in res:
        return "tail"
    if "fit_x" in res:
        return "fit"
    return "trace"


def emit_plot_data(record: dict, kind: str | None = None, fmt: str = "csv") -> str:
    """CSV text for a record; columns depend on the artifact kind."""
    if fmt != "csv":
        raise ConfigError(f"unsupported plot format {fmt!r}; only csv is available")
    kind = kind or infer_plot_kind(record)
    header, rows, footer = plot_rows(record, kind)
    return csv_text(header, rows, footer)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)) or not isinstance(v, (float, np.floating)):
        return str(v)
    return fmt_float(v)


def csv_text(header, rows, footer=()) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    for line in footer:
        buf.write(line + "\n")
    return buf.getvalue()
