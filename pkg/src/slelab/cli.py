"""Command line entry point.

Exit codes: 0 success, 1 a checked result or acceptance criterion failed,
2 configuration or argument error, 3 numerical error, 4 I/O error,
130 interrupted (a partial record is flushed when an output path is set).
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction
from pathlib import Path

import click

from . import acceptance
from .errors import (ConfigError, DomainError, NumericalInstabilityError, SingularityError,
                     SwallowedError, UnsupportedHullError)
from .experiment import (ExperimentConfig, ResultRecord, csv_text, default_workers, dumps,
                         emit_plot_data, output_path, run_experiment)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO, EXIT_INTERRUPT = 0, 1, 2, 3, 4, 130


def _write(text: str, out: str | None) -> None:
    path = output_path(out)
    if path is None:
        click.echo(text, nl=False)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _execute(config: ExperimentConfig, out: str | None, workers: int | None, fmt: str = "json") -> None:
    """Run one experiment and translate failures into exit codes."""
    target = out or config.output
    try:
        record = run_experiment(config, workers)
    except KeyboardInterrupt:
        if target:
            partial = ResultRecord(config.as_dict(), {}, None, 0.0, status="interrupted")
            _write(partial.to_json(), target)
        click.echo("interrupted", err=True)
        sys.exit(EXIT_INTERRUPT)
    if fmt == "csv":
        text = emit_plot_data(record.as_dict())
    else:
        text = record.to_json()
    _write(text, target)
    if record.passed is False:
        click.echo(f"{config.name}: result outside tolerance", err=True)
        sys.exit(EXIT_FAIL)


def _config(name: str, op: str, params: dict, replicas: int = 0, seed: int = 0,
            k_sigma: float = 3.0) -> ExperimentConfig:
    clean = {k: v for k, v in params.items() if v is not None}
    return ExperimentConfig(name=name, op=op, params=clean, replicas=replicas, seed=seed,
                            tolerance={"k_sigma": k_sigma, "slack": 0.0})


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _number(text: str):
    """Integers and fractions stay exact; anything else becomes a float."""
    try:
        return int(text)
    except ValueError:
        pass
    if "/" in text:
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


class KappaType(click.ParamType):
    """Positive number given as a decimal or a fraction such as 8/3."""

    name = "kappa"

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            return float(Fraction(str(value).strip()))
        except (ValueError, ZeroDivisionError):
            self.fail(f"{value!r} is not a number or fraction", param, ctx)


KAPPA = KappaType()

workers_opt = click.option("--workers", type=int, default=None,
                           help="Worker threads (default: SLELAB_WORKERS or the CPU count).")
seed_opt = click.option("--seed", type=int, default=0, show_default=True)
out_opt = click.option("--out", type=str, default=None, help="Output file (relative to SLELAB_OUTDIR if set).")


@click.group()
@click.version_option(package_name="artifact")
def cli() -> None:
    """Numerical experiments for Loewner evolution and SLE."""


@cli.command()
@click.argument("config_file", type=click.Path(dir_okay=False))
@out_opt
@workers_opt
def run(config_file: str, out: str | None, workers: int | None) -> None:
    """Run an experiment described by a key=value config file."""
    _execute(ExperimentConfig.load(config_file), out, workers)


@cli.command()
@click.option("--kappa", required=True, type=str, help="Number or fraction such as 8/3.")
@out_opt
def params(kappa: str, out: str | None) -> None:
    """Print every derived parameter for kappa as JSON."""
    _execute(_config("params", "params", {"kappa": _number(kappa)}), out, 1)


@cli.group()
def conformal() -> None:
    """Closed-form conformal maps."""


@conformal.command("hcap")
@click.option("--hull", required=True, help="slit:x0,h | halfdisk:x0,r | tilt:x0,l,theta")
@out_opt
def conformal_hcap(hull: str, out: str | None) -> None:
    _execute(_config("hcap", "conformal.hcap", {"hull": hull}), out, 1)


@cli.group()
def loewner() -> None:
    """Loewner chains and traces."""


@loewner.command("trace")
@click.option("--driving", default="brownian", show_default=True, help="'brownian' or a file of driving values.")
@click.option("--kappa", required=True, type=KAPPA)
@click.option("--steps", default=1000, show_default=True, type=int)
@click.option("--dt", default=1e-3, show_default=True, type=float)
@click.option("--tip-eps", default=None, type=float)
@click.option("--interpolation", type=click.Choice(["sqrt", "constant"]), default="sqrt", show_default=True)
@seed_opt
@out_opt
@click.option("--chain-out", default=None, help="Also write the slit-map chain as dt,du CSV.")
def loewner_trace(driving, kappa, steps, dt, tip_eps, interpolation, seed, out, chain_out) -> None:
    """Compute a trace; writes t,re,im CSV."""
    cfg = _config("trace", "loewner.trace", {"driving": driving, "kappa": kappa, "steps": steps, "dt": dt,
                                              "tip_eps": tip_eps, "interpolation": interpolation}, seed=seed)
    record = run_experiment(cfg, 1)
    _write(csv_text(("t", "re", "im"), record.result["trace"]), out)
    if chain_out:
        _write(csv_text(("dt", "du"), record.result["chain"]), chain_out)


@cli.group()
def sle() -> None:
    """SLE driving processes and Monte Carlo estimators."""


@sle.command("sample")
@click.option("--kind", type=click.Choice(["chordal", "kapparho", "radial", "two-sided", "subdomain"]),
              default="chordal", show_default=True)
@click.option("--kappa", required=True, type=KAPPA)
@click.option("--dt", default=1e-3, show_default=True, type=float)
@click.option("--steps", default=1000, show_default=True, type=int)
@click.option("--rho", default=0.0, type=float)
@click.option("--force-point", default=1.0, type=float)
@click.option("--target", default="1j", help="Interior target for radial kinds, e.g. 0.3+0.4j.")
@click.option("--hull", default="", help="Removed hull for the subdomain kind.")
@seed_opt
@out_opt
def sle_sample(kind, kappa, dt, steps, rho, force_point, target, hull, seed, out) -> None:
    """Sample one driving function."""
    try:
        tgt = complex(target.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"bad target {target!r}") from exc
    _execute(_config("sample", "sle.sample", {"kind": kind, "kappa": kappa, "dt": dt, "steps": steps,
                                              "rho": rho, "force_point": force_point, "target": tgt,
                                              "hull": hull}, seed=seed), out, 1)


@sle.command("cardy-mc")
@click.option("--kappa", default=6.0, show_default=True, type=KAPPA)
@click.option("--y", required=True, type=float)
@click.option("--replicas", default=100_000, show_default=True, type=int)
@click.option("--dt", default=1e-4, show_default=True, type=float)
@seed_opt
@out_opt
@workers_opt
def sle_cardy(kappa, y, replicas, dt, seed, out, workers) -> None:
    """Swallowing-order probability against the closed form."""
    _execute(_config("cardy", "sle.cardy-mc", {"kappa": kappa, "y": y, "dt": dt}, replicas, seed), out, workers)


@sle.command("exponent-fit")
@click.option("--kind", type=click.Choice(["boundary", "radial"]), default="boundary", show_default=True)
@click.option("--kappa", default="8/3", show_default=True, type=KAPPA)
@click.option("--lam", required=True, type=float)
@click.option("--tmin", default=None, type=float)
@click.option("--tmax", default=None, type=float)
@click.option("--points", default=9, show_default=True, type=int)
@click.option("--replicas", default=40_000, show_default=True, type=int)
@seed_opt
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@out_opt
@workers_opt
def sle_exponent_fit(kind, kappa, lam, tmin, tmax, points, replicas, seed, fmt, out, workers) -> None:
    """Fit the decay exponent of a derivative moment."""
    if tmin is None:
        tmin = 10.0 if kind == "boundary" else 1.0
    if tmax is None:
        tmax = 1000.0 if kind == "boundary" else 5.0
    _execute(_config("exponent-fit", "sle.exponent-fit", {"kind": kind, "kappa": kappa, "lam": lam, "tmin": tmin,
                                                          "tmax": tmax, "points": points}, replicas, seed),
             out, workers, fmt)


@sle.command("green-tail")
@click.option("--kappa", default="8/3", show_default=True, type=KAPPA)
@click.option("--z", default="1j", help="Interior point, e.g. 1+1j.")
@click.option("--deltas", default="0.2,0.1,0.05,0.025", show_default=True)
@click.option("--replicas", default=20_000, show_default=True, type=int)
@seed_opt
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@out_opt
@workers_opt
def sle_green_tail(kappa, z, deltas, replicas, seed, fmt, out, workers) -> None:
    """Tail of the conformal radius seen from z."""
    try:
        zz = complex(z.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"bad point {z!r}") from exc
    _execute(_config("green-tail", "sle.green-tail", {"kappa": kappa, "z": zz, "deltas": _floats(deltas)},
                     replicas, seed), out, workers, fmt)


@sle.command("bessel")
@click.option("--a", "a", required=True, type=float)
@click.option("--x", default=1.0, type=float)
@click.option("--horizon", default=1e4, type=float)
@click.option("--replicas", default=10_000, show_default=True, type=int)
@click.option("--method", type=click.Choice(["exact", "euler"]), default="exact", show_default=True)
@seed_opt
@out_opt
@workers_opt
def sle_bessel(a, x, horizon, replicas, method, seed, out, workers) -> None:
    """Absorption frequency of the Bessel process at 0."""
    _execute(_config("bessel", "sle.bessel", {"a": a, "x": x, "horizon": horizon, "method": method},
                     replicas, seed), out, workers)


@sle.command("restriction")
@click.option("--hull", default="halfdisk:2,0.5", show_default=True)
@click.option("--replicas", default=10_000, show_default=True, type=int)
@seed_opt
@out_opt
@workers_opt
def sle_restriction(hull, replicas, seed, out, workers) -> None:
    """Avoidance frequency of a half-disk for kappa = 8/3."""
    _execute(_config("restriction", "sle.restriction", {"hull": hull}, replicas, seed), out, workers)


@cli.group()
def bm() -> None:
    """Brownian measures."""


@bm.command("hcap")
@click.option("--hull", required=True)
@click.option("--replicas", default=200_000, show_default=True, type=int)
@seed_opt
@out_opt
def bm_hcap(hull, replicas, seed, out) -> None:
    """Monte Carlo half-plane capacity."""
    _execute(_config("bm-hcap", "bm.hcap", {"hull": hull}, replicas, seed), out, 1)


@bm.command("bubble")
@click.option("--hull", required=True)
@click.option("--replicas", default=100_000, show_default=True, type=int)
@seed_opt
@out_opt
def bm_bubble(hull, replicas, seed, out) -> None:
    """Bubble mass escaping the domain against the Schwarzian."""
    _execute(_config("bubble", "bm.bubble", {"hull": hull}, replicas, seed), out, 1)


@bm.command("beurling")
@click.option("--grid", default="0.25,0.125,0.0625,0.03125,0.015625,0.0078125", show_default=True)
@click.option("--replicas", default=100_000, show_default=True, type=int)
@seed_opt
@out_opt
@workers_opt
def bm_beurling(grid, replicas, seed, out, workers) -> None:
    """Beurling escape probabilities and fitted exponent."""
    _execute(_config("beurling", "bm.beurling", {"eps": _floats(grid)}, replicas, seed, k_sigma=3.0),
             out, workers)


@bm.command("loops")
@click.option("--box", default="0,1,0,1", show_default=True, help="xmin,xmax,ymin,ymax")
@click.option("--count", default=100, show_default=True, type=int)
@seed_opt
@out_opt
def bm_loops(box, count, seed, out) -> None:
    """Sample rooted Brownian loops in a box."""
    _execute(_config("loops", "bm.loops", {"box": _floats(box)}, count, seed), out, 1)


@cli.group()
def lattice() -> None:
    """Lattice models."""


@lattice.command("saw-count")
@click.option("--n", "n", required=True, type=int)
@out_opt
def lattice_saw(n, out) -> None:
    """Exact self-avoiding walk count and connective-constant bounds."""
    _execute(_config("saw-count", "lattice.saw-count", {"n": n}), out, 1)


@lattice.command("lerw")
@click.option("--size", default=64, show_default=True, type=int)
@seed_opt
@out_opt
def lattice_lerw(size, seed, out) -> None:
    """Loop-erased walk from the centre of a box; writes x,y CSV."""
    record = run_experiment(_config("lerw", "lattice.lerw", {"size": size}, seed=seed), 1)
    _write(csv_text(("x", "y"), record.result["points"]), out)


@lattice.command("perc-cross")
@click.option("--x", "x", required=True, help="Split position(s) in [0,1], comma-separated.")
@click.option("--size", default=256, show_default=True, type=int)
@click.option("--replicas", default=20_000, show_default=True, type=int)
@seed_opt
@out_opt
@workers_opt
def lattice_perc(x, size, replicas, seed, out, workers) -> None:
    """Crossing probability in an equilateral triangle."""
    xs = _floats(x)
    _execute(_config("perc-cross", "lattice.perc-cross", {"x": xs, "size": size}, replicas, seed,
                     k_sigma=3.0), out, workers)


@cli.command()
@click.argument("names", nargs=-1)
@click.option("--list", "list_only", is_flag=True, help="List criterion names and exit.")
@out_opt
@workers_opt
def accept(names, list_only, out, workers) -> None:
    """Run acceptance criteria by name or number ('all' runs every one)."""
    if list_only:
        for n, (label, _) in acceptance.CRITERIA.items():
            click.echo(f"{n:2d} {label}")
        return
    if not names or "all" in names:
        todo = list(acceptance.CRITERIA)
    else:
        todo = [acceptance.resolve(n) for n in names]
    w = default_workers() if workers is None else workers
    results = []
    for n in todo:
        res = acceptance.run_criterion(n, w)
        click.echo(res.line())
        results.append(res)
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if out:
        _write(dumps([r.as_dict() for r in results]), out)
    if failed:
        sys.exit(EXIT_FAIL)


@cli.command()
@click.argument("record_file", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["trace", "tail", "fit"]), default=None,
              help="Artifact kind (inferred from the record when omitted).")
@click.option("--format", "fmt", default="csv", show_default=True)
@out_opt
def plot(record_file, kind, fmt, out) -> None:
    """Convert a JSON result record into plot-ready CSV."""
    try:
        text = Path(record_file).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read record {record_file}: {exc}") from exc
    try:
        record = json.loads(text) if text.strip() else {}
    except ValueError as exc:
        raise ConfigError(f"record is not valid JSON: {exc}") from exc
    _write(emit_plot_data(record, kind, fmt), out)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("interrupted", err=True)
        return EXIT_INTERRUPT
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (ConfigError, DomainError, UnsupportedHullError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (NumericalInstabilityError, SingularityError, SwallowedError, ArithmeticError) as exc:
        click.echo(f"numerical error: {exc}", err=True)
        return EXIT_NUMERIC
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return EXIT_IO
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
