"""Command-line entry point: one subcommand per experiment.

Every run is described by an :class:`ExperimentSpec` that round-trips through
JSON, so ``percolab run spec.json`` repeats any command exactly.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import checks
from .fk import FKParams, fk_dual_params, fk_exact, fk_sample, self_dual_point
from .lattice import build_box, build_hex_domain, build_rectangle
from .loops import LoopParams, loop_exact, loop_sample
from .parafermion import connective_estimate, elementary_contours, elementary_integrals, observable_field, saw_counts
from .percolation import (
    crossing_prob,
    crossing_prob_exact,
    enumeration_cap,
    enumerate_expectation,
    one_arm_prob,
    one_arm_prob_exact,
)
from .potts import es_chain, p_of_beta
from .sharpness import (
    dynamical_snapshots,
    edge_marginals_over_time,
    lag_autocovariance,
    mixing_ratio,
    osss_check,
    p_grid,
    s_curve,
)


class SpecError(ValueError):
    """Invalid experiment specification."""


@dataclass
class ExperimentSpec:
    """A subcommand with its parameters, seed and output destination."""

    command: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    output: str | None = None
    format: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        data = json.loads(text)
        unknown = set(data) - {"command", "params", "seed", "output", "format"}
        if unknown:
            raise SpecError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Result:
    columns: list[str]
    rows: list[dict]
    scalar: str | None = None


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


# handlers: (params, seed, workers) -> Result


def _crossing(prm, seed, workers):
    n, m, p = prm["n"], prm["m"], prm["p"]
    if prm.get("exact"):
        v = crossing_prob_exact(n, m, p)
        return Result(["experiment", "n", "m", "p", "estimate", "stderr", "replicas", "seed"],
                      [dict(experiment="crossing-exact", n=n, m=m, p=p, estimate=v, stderr=0.0, replicas=0, seed="")], _fmt(v))
    est = crossing_prob(n, m, p, prm["replicas"], seed, workers)
    return Result(["experiment", "n", "m", "p", "estimate", "stderr", "replicas", "seed"],
                  [dict(experiment="crossing", n=n, m=m, p=p, estimate=est.mean, stderr=est.stderr, replicas=est.replicas, seed=seed)])


def _one_arm(prm, seed, workers):
    d, n, p = prm["d"], prm["n"], prm["p"]
    cols = ["experiment", "d", "n", "p", "estimate", "stderr", "replicas", "seed"]
    if prm.get("exact"):
        v = one_arm_prob_exact(d, n, p)
        return Result(cols, [dict(experiment="one-arm-exact", d=d, n=n, p=p, estimate=v, stderr=0.0, replicas=0, seed="")], _fmt(v))
    est = one_arm_prob(d, n, p, prm["replicas"], seed, workers)
    return Result(cols, [dict(experiment="one-arm", d=d, n=n, p=p, estimate=est.mean, stderr=est.stderr, replicas=est.replicas, seed=seed)])


def _fk(prm, seed, workers):
    q, p, n = prm["q"], prm["p"], prm["n"]
    g = build_rectangle(n, n)
    params = FKParams(p, q)
    cols = ["experiment", "observable", "n", "p", "q", "estimate", "stderr", "replicas", "seed"]
    base = dict(n=n, p=p, q=q)
    if prm.get("exact"):
        from .percolation import crossing_function

        ex = fk_exact(g, params, {"crossing": crossing_function(g)})
        rows = [
            dict(experiment="fk-exact", observable="open_fraction", estimate=float(ex.edge_marginals.mean()), **base),
            dict(experiment="fk-exact", observable="crossing", estimate=ex.values["crossing"], **base),
            dict(experiment="fk-exact", observable="log_Z", estimate=float(np.log(ex.Z)), **base),
        ]
        for r in rows:
            r.update(stderr=0.0, replicas=0, seed="")
        return Result(cols, rows)
    s = fk_sample(g, params, prm["sweeps"], prm["burn_in"], seed)
    rows = []
    for name, est in (("open_fraction", s.open_fraction()), ("crossing", s.crossing())):
        rows.append(dict(experiment="fk", observable=name, estimate=est.mean, stderr=est.stderr, replicas=est.replicas, seed=seed, **base))
    return Result(cols, rows)


def _fk_dual(prm, seed, workers):
    d = fk_dual_params(FKParams(prm["p"], prm["q"]))
    return Result(["p", "q", "p_dual", "q_dual"], [dict(p=prm["p"], q=prm["q"], p_dual=d.p, q_dual=d.q)], f"{_fmt(d.p)} {_fmt(d.q)}")


def _selfdual(prm, seed, workers):
    v = self_dual_point(prm["q"])
    return Result(["q", "p_self_dual"], [dict(q=prm["q"], p_self_dual=v)], _fmt(v))


def _potts(prm, seed, workers):
    q, beta, n = prm["q"], prm["beta"], prm["n"]
    chain = es_chain(build_rectangle(n, n), p_of_beta(beta), q, prm["sweeps"], prm["burn_in"], seed)
    from .stats import series_estimate

    cols = ["experiment", "observable", "n", "q", "beta", "estimate", "stderr", "replicas", "seed"]
    rows = []
    mag = series_estimate(chain.magnetization(), seed)
    rows.append(dict(experiment="potts", observable="magnetization", n=n, q=q, beta=beta, estimate=mag.mean, stderr=mag.stderr, replicas=mag.replicas, seed=seed))
    fr = chain.color_fractions()
    for c in range(q):
        e = series_estimate(fr[:, c], seed)
        rows.append(dict(experiment="potts", observable=f"fraction_color_{c + 1}", n=n, q=q, beta=beta, estimate=e.mean, stderr=e.stderr, replicas=e.replicas, seed=seed))
    return Result(cols, rows)


def _loop(prm, seed, workers):
    dom = build_hex_domain(prm["radius"])
    params = LoopParams(prm["x"], prm["n"])
    cols = ["experiment", "observable", "radius", "x", "n", "estimate", "stderr", "replicas", "seed"]
    base = dict(radius=prm["radius"], x=prm["x"], n=prm["n"])
    if prm.get("exact"):
        ex = loop_exact(dom, params)
        vals = (("loop_density", ex.mean_size / dom.edge_count), ("mean_loops", ex.mean_loops))
        return Result(cols, [dict(experiment="loop-exact", observable=k, estimate=v, stderr=0.0, replicas=0, seed="", **base) for k, v in vals])
    s = loop_sample(dom, params, prm["sweeps"], prm["burn_in"], seed)
    rows = []
    for name, est in (("loop_density", s.loop_density()), ("mean_loops", s.mean_loops())):
        rows.append(dict(experiment="loop", observable=name, estimate=est.mean, stderr=est.stderr, replicas=est.replicas, seed=seed, **base))
    return Result(cols, rows)


def _pf_integral(prm, seed, workers):
    dom = build_hex_domain(prm["radius"])
    field_ = observable_field(dom, prm["n"], prm["x"], prm.get("sigma"))
    vals = elementary_integrals(field_)
    rows = []
    for (v, _), val in zip(elementary_contours(dom), vals):
        rows.append(dict(vertex=v, n=prm["n"], x=prm["x"], sigma=field_.sigma, real=val.real, imag=val.imag, abs=abs(val)))
    return Result(["vertex", "n", "x", "sigma", "real", "imag", "abs"], rows)


def _saw(prm, seed, workers):
    L = prm["max_length"]
    c = saw_counts(L)
    rows = []
    for k in range(1, L + 1):
        est = connective_estimate(k, c)
        rows.append(dict(length=k, count=int(c[k]), ratio=est.ratio, root=est.root, degenerate=int(est.degenerate)))
    return Result(["length", "count", "ratio", "root", "degenerate"], rows)


def _sweep(prm, seed, workers):
    grid = p_grid(prm["p_from"], prm["p_to"], prm["step"])
    sc = s_curve(prm["n"], grid, prm["replicas"], seed, workers=workers)
    cols = ["experiment", "n", "p", "estimate", "stderr", "replicas", "seed"]
    rows = [dict(experiment="sweep", n=sc.n, p=float(p), estimate=float(h), stderr=float(s), replicas=sc.replicas, seed=seed)
            for p, h, s in zip(sc.p_grid, sc.H, sc.stderr)]
    rows.append(dict(experiment="sweep-width", n=sc.n, p="", estimate=sc.width, stderr=sc.width_stderr, replicas=sc.replicas, seed=seed))
    rows.append(dict(experiment="sweep-half", n=sc.n, p="", estimate=sc.p_half, stderr=sc.p_half_stderr, replicas=sc.replicas, seed=seed))
    return Result(cols, rows)


def _osss(prm, seed, workers):
    rep = osss_check(build_box(2, prm["n"]), prm["p"], prm["replicas"], seed, workers)
    cols = ["experiment", "quantity", "n", "p", "estimate", "stderr", "replicas", "seed"]
    rows = [dict(experiment="osss", quantity=k, n=rep.n, p=rep.p, estimate=e.mean, stderr=e.stderr, replicas=e.replicas, seed=seed)
            for k, e in (("variance", rep.variance), ("rhs", rep.rhs), ("slack", rep.slack))]
    rows.append(dict(experiment="osss", quantity="max_revealment", n=rep.n, p=rep.p, estimate=rep.max_revealment, stderr="", replicas=prm["replicas"], seed=seed))
    return Result(cols, rows)


def _dyn(prm, seed, workers):
    times = [float(t) for t in str(prm["queries"]).split(",")]
    if times[0] != 0.0:
        times = [0.0] + times
    if prm.get("horizon") is not None and max(times) > prm["horizon"]:
        raise SpecError("query times must not exceed the horizon")
    snaps = dynamical_snapshots(build_box(2, prm["n"]), prm["p"], times, prm["replicas"], seed, workers)
    cols = ["experiment", "t", "p", "marginal", "marginal_stderr", "autocov", "autocov_stderr", "replicas", "seed"]
    rows = []
    for j, (t, m) in enumerate(zip(times, edge_marginals_over_time(snaps))):
        ac = lag_autocovariance(snaps, 0, j)
        rows.append(dict(experiment="dyn", t=t, p=prm["p"], marginal=m.mean, marginal_stderr=m.stderr,
                         autocov=ac.mean, autocov_stderr=ac.stderr, replicas=prm["replicas"], seed=seed))
    return Result(cols, rows)


def _mix(prm, seed, workers):
    r = mixing_ratio(prm["A"], prm["B"], prm["n"], prm["N"], prm["p"], prm["replicas"], seed, q=prm["q"], workers=workers)
    cols = ["experiment", "A", "B", "n", "N", "p", "q", "estimate", "stderr", "pA", "pB", "pAB", "degenerate", "replicas", "seed"]
    return Result(cols, [dict(experiment="mix", A=prm["A"], B=prm["B"], n=prm["n"], N=prm["N"], p=prm["p"], q=prm["q"],
                              estimate=r.ratio, stderr=r.stderr, pA=r.pA, pB=r.pB, pAB=r.pAB, degenerate=int(r.degenerate),
                              replicas=r.samples, seed=seed)])


def _verify(prm, seed, workers):
    only = None
    if prm.get("only"):
        only = [int(k) for k in str(prm["only"]).split(",")]
    cap = prm.get("cap")
    log = (lambda s: print(s, file=sys.stderr)) if prm.get("progress", True) else None
    if cap is not None:
        with enumeration_cap(int(cap)):
            report = checks.verify(seed, only=only, determinism=not prm.get("no_repeat"), log=log)
    else:
        report = checks.verify(seed, only=only, determinism=not prm.get("no_repeat"), log=log)
    rows = [dict(number=r.number, name=r.name, passed=int(r.passed), error=r.error or "") for r in report.results]
    return Result(["number", "name", "passed", "error"], rows, report.to_json().rstrip("\n")), report


@dataclass(frozen=True)
class Command:
    handler: Callable
    stochastic: bool
    help: str


COMMANDS: dict[str, Command] = {
    "crossing": Command(_crossing, True, "left-right crossing probability of [0,n]x[0,m]"),
    "one-arm": Command(_one_arm, True, "probability that the origin reaches distance n"),
    "fk": Command(_fk, True, "FK heat-bath estimates on the n x n square"),
    "fk-dual": Command(_fk_dual, False, "dual FK parameters"),
    "selfdual": Command(_selfdual, False, "self-dual point sqrt(q)/(1+sqrt(q))"),
    "potts": Command(_potts, True, "Swendsen-Wang chain: color fractions"),
    "loop": Command(_loop, True, "loop O(n) plaquette chain on a hexagonal domain"),
    "pf-integral": Command(_pf_integral, False, "elementary contour integrals of the parafermionic observable"),
    "saw": Command(_saw, False, "self-avoiding walk counts and connective-constant estimates"),
    "sweep": Command(_sweep, True, "crossing S-curve of the n x n square"),
    "osss": Command(_osss, True, "both sides of the OSSS inequality on a box"),
    "dyn": Command(_dyn, True, "dynamical percolation marginals and autocovariances"),
    "mix": Command(_mix, True, "mixing ratio between inner and outer events"),
    "verify": Command(_verify, True, "run every exit-criteria check"),
}


def _is_exact(spec: ExperimentSpec) -> bool:
    return bool(spec.params.get("exact"))


def execute(spec: ExperimentSpec, workers: int | None = None):
    """Run a spec and return its :class:`Result` (and the verify report for ``verify``)."""
    cmd = COMMANDS.get(spec.command)
    if cmd is None:
        raise SpecError(f"unknown command {spec.command!r}")
    if cmd.stochastic and not _is_exact(spec) and spec.seed is None:
        raise SpecError(f"{spec.command} needs an explicit seed")
    out = cmd.handler(dict(spec.params), spec.seed, workers)
    return out if isinstance(out, tuple) else (out, None)


def render(result: Result, fmt: str | None, timing: float | None = None) -> str:
    fmt = fmt or ("plain" if result.scalar is not None else "csv")
    cols = list(result.columns) + (["wall_time"] if timing is not None else [])
    rows = [dict(r, wall_time=timing) if timing is not None else r for r in result.rows]
    if fmt == "plain" and result.scalar is not None:
        return result.scalar + "\n"
    if fmt == "json":
        return json.dumps({"columns": cols, "rows": rows}, sort_keys=True, default=_fmt) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the same directory, so readers never see a partial file."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".percolab-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(spec: ExperimentSpec, workers: int | None = None, timing: bool = False) -> int:
    """Execute a spec, emit its output and return the process exit code."""
    t0 = time.perf_counter()
    result, report = execute(spec, workers)
    text = render(result, spec.format, time.perf_counter() - t0 if timing else None)
    if spec.output:
        write_atomic(spec.output, text)
    else:
        sys.stdout.write(text)
    if report is not None and not report.passed:
        return 1
    return 0


def _add_common(p: argparse.ArgumentParser, stochastic: bool, replicas: int | None = None):
    if stochastic:
        p.add_argument("--seed", type=int, help="64-bit seed (required unless --exact)")
    if replicas is not None:
        p.add_argument("--replicas", type=int, default=replicas)
    p.add_argument("--output", "-o", help="write results to this file instead of stdout")
    p.add_argument("--format", choices=("plain", "csv", "json"), help="output format (default csv, plain for scalars)")
    p.add_argument("--save-manifest", metavar="PATH", help="also write the experiment spec as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="percolab", description="Percolation laboratory experiments")
    parser.add_argument("--workers", type=int, help="worker processes (default: $PERCOLAB_WORKERS or 1)")
    parser.add_argument("--timing", action="store_true", help="append a wall_time column (breaks byte-identical reruns)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crossing", help=COMMANDS["crossing"].help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--exact", action="store_true", help="use the enumeration oracle")
    _add_common(p, True, 10**4)

    p = sub.add_parser("one-arm", help=COMMANDS["one-arm"].help)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--exact", action="store_true")
    _add_common(p, True, 10**5)

    p = sub.add_parser("fk", help=COMMANDS["fk"].help)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sweeps", type=int, default=10**4)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--exact", action="store_true")
    _add_common(p, True)

    p = sub.add_parser("fk-dual", help=COMMANDS["fk-dual"].help)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    _add_common(p, False)

    p = sub.add_parser("selfdual", help=COMMANDS["selfdual"].help)
    p.add_argument("--q", type=float, required=True)
    _add_common(p, False)

    p = sub.add_parser("potts", help=COMMANDS["potts"].help)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sweeps", type=int, default=10**4)
    p.add_argument("--burn-in", type=int, default=100)
    _add_common(p, True)

    p = sub.add_parser("loop", help=COMMANDS["loop"].help)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--sweeps", type=int, default=10**4)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--exact", action="store_true")
    _add_common(p, True)

    p = sub.add_parser("pf-integral", help=COMMANDS["pf-integral"].help)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--sigma", type=float, help="override the spin")
    _add_common(p, False)

    p = sub.add_parser("saw", help=COMMANDS["saw"].help)
    p.add_argument("--max-length", type=int, required=True)
    _add_common(p, False)

    p = sub.add_parser("sweep", help=COMMANDS["sweep"].help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p-from", type=float, default=0.3)
    p.add_argument("--p-to", type=float, default=0.7)
    p.add_argument("--step", type=float, default=0.01)
    _add_common(p, True, 10**4)

    p = sub.add_parser("osss", help=COMMANDS["osss"].help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    _add_common(p, True, 20000)

    p = sub.add_parser("dyn", help=COMMANDS["dyn"].help)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--queries", required=True, help="comma-separated query times")
    p.add_argument("--n", type=int, default=4, help="radius of the box")
    _add_common(p, True, 2000)

    p = sub.add_parser("mix", help=COMMANDS["mix"].help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--A", choices=("cross", "arm"), default="cross")
    p.add_argument("--B", choices=("cross", "arm"), default="cross")
    _add_common(p, True, 20000)

    p = sub.add_parser("verify", help=COMMANDS["verify"].help)
    p.add_argument("--seed", type=int, default=checks.DEFAULT_SEED)
    p.add_argument("--only", help="comma-separated check numbers")
    p.add_argument("--no-repeat", action="store_true", help="skip the second run that checks determinism")
    p.add_argument("--cap", type=int, help="override the enumeration cap")
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("plain", "csv", "json"))
    p.add_argument("--save-manifest", metavar="PATH")

    p = sub.add_parser("run", help="execute a JSON experiment manifest")
    p.add_argument("manifest")
    return parser


_META = {"command", "seed", "output", "format", "save_manifest", "workers", "timing"}


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    params = {k: v for k, v in vars(args).items() if k not in _META}
    return ExperimentSpec(args.command, params, getattr(args, "seed", None), args.output, args.format)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            with open(args.manifest) as fh:
                spec = ExperimentSpec.from_json(fh.read())
        else:
            spec = spec_from_args(args)
            if args.save_manifest:
                write_atomic(args.save_manifest, spec.to_json())
        return run(spec, args.workers, args.timing)
    except (SpecError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"percolab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
