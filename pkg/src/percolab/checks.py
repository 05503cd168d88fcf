"""Exit-criteria checks run by ``percolab verify``.

Each check returns a :class:`CheckResult` whose metrics depend only on the
seed, so two runs with the same seed serialize to identical bytes. Wall times
are kept apart from the serialized report.
"""
from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fk import FKParams, fk_dual_params, fk_exact, fk_sample, self_dual_point
from .lattice import build_box, build_cycle, build_hex_domain, build_rectangle
from .loops import LoopParams, loop_exact, loop_sample, x_c
from .parafermion import MU_HEX, elementary_integrals, observable_field, saw_counts, sigma
from .percolation import (
    EnumerationCapError,
    connects,
    crossing_function,
    crossing_prob,
    crossing_prob_exact,
    decay_fit,
    one_arm_function,
    one_arm_profile,
)
from .potts import PottsParams, beta_of_p, es_pushforward, potts_distribution, total_variation
from .sharpness import (
    dynamical_snapshots,
    edge_marginals_over_time,
    influence_exact,
    lag_autocovariance,
    osss_check,
    p_grid,
    s_curve,
)
from .stats import Z95

DEFAULT_SEED = 20240601


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    error: str | None = None

    def as_dict(self) -> dict:
        out = {"number": self.number, "name": self.name, "passed": self.passed, "metrics": self.metrics}
        if self.error is not None:
            out["error"] = self.error
        return out


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def wilson_upper(hits: int, total: int, z: float = Z95) -> float:
    """Upper end of the Wilson score interval for a binomial proportion."""
    ph = hits / total
    denom = 1.0 + z * z / total
    centre = ph + z * z / (2 * total)
    spread = z * math.sqrt(ph * (1 - ph) / total + z * z / (4 * total * total))
    return (centre + spread) / denom


def check_crossing_duality(seed: int) -> tuple[bool, dict]:
    exact = {f"H_{n + 1},{n}": crossing_prob_exact(n + 1, n, 0.5) for n in (1, 2)}
    ok = all(abs(v - 0.5) <= 1e-12 for v in exact.values())
    mc = {}
    for n in (16, 32):
        est = crossing_prob(n + 1, n, 0.5, 10**4, seed + n)
        mc[f"H_{n + 1},{n}"] = {"mean": est.mean, "stderr": est.stderr}
        ok &= est.within(0.5, 4.0)
    return ok, {"exact": exact, "monte_carlo": mc}


def check_pc_recovery(seed: int) -> tuple[bool, dict]:
    grid = p_grid(0.30, 0.70, 0.01)
    rows = {}
    for n in (16, 32, 64):
        sc = s_curve(n, grid, 10**4, seed + n)
        rows[str(n)] = {"p_half": sc.p_half, "width": sc.width, "width_stderr": sc.width_stderr}
    halves_ok = all(0.48 <= r["p_half"] <= 0.52 for r in rows.values())
    widths = [rows[k]["width"] for k in ("16", "32", "64")]
    shrinking = all(b < a for a, b in zip(widths, widths[1:]))
    return halves_ok and shrinking, {"curves": rows}


def check_self_dual(seed: int) -> tuple[bool, dict]:
    sd = self_dual_point(2.0)
    ok = abs(sd - 0.5857864376) <= 1e-10
    involution = fixed = 0.0
    for q in (1.0, 2.0, 3.0, 4.0):
        for p in np.round(np.linspace(0.01, 0.99, 99), 2):
            back = fk_dual_params(fk_dual_params(FKParams(float(p), q)))
            involution = max(involution, abs(back.p - p))
        s = self_dual_point(q)
        fixed = max(fixed, abs(fk_dual_params(FKParams(s, q)).p - s))
    ok &= involution <= 1e-15 and fixed <= 1e-15
    sample = fk_sample(build_rectangle(16, 16), FKParams(sd, 2.0), sweeps=20000, burn_in=2000, seed=seed)
    cross = sample.crossing()
    ok &= 0.1 <= cross.mean <= 0.9
    return ok, {
        "self_dual_point_q2": sd,
        "max_involution_error": involution,
        "max_fixed_point_error": fixed,
        "fk_crossing_16x16": {"mean": cross.mean, "stderr": cross.stderr},
    }


def check_subcritical(seed: int) -> tuple[bool, dict]:
    replicas = 10**6
    low = one_arm_profile(2, 8, 0.1, replicas, seed)
    union = []
    ok = True
    for n, est in enumerate(low, start=1):
        upper = wilson_upper(int(round(est.mean * replicas)), replicas)
        bound = (2 * 2 * 0.1) ** n
        union.append({"n": n, "theta": est.mean, "upper95": upper, "bound": bound})
        ok &= upper < bound
    ns = [8, 16, 24, 32]
    prof = one_arm_profile(2, 32, 0.35, 4 * 10**6, seed + 1)
    fit = decay_fit(ns, [prof[n - 1].mean for n in ns], [prof[n - 1].stderr for n in ns])
    ok &= fit.positive
    return ok, {
        "union_bound_p0.1": union,
        "decay_p0.35": {"rate": fit.rate, "stderr": fit.stderr, "thetas": [prof[n - 1].mean for n in ns]},
    }


def check_edwards_sokal(seed: int) -> tuple[bool, dict]:
    worst = 0.0
    rows = []
    for label, g in (("cycle4", build_cycle(4)), ("square1x1", build_rectangle(1, 1))):
        for q in (2, 3):
            for p in (0.3, 0.6):
                tv = total_variation(es_pushforward(g, p, q), potts_distribution(g, PottsParams(beta_of_p(p), q)))
                rows.append({"graph": label, "q": q, "p": p, "tv": tv})
                worst = max(worst, tv)
    return worst < 1e-12, {"max_tv": worst, "cases": rows}


def _max_z(est, err, exact):
    return float(np.max(np.abs(est - exact) / err))


def check_mcmc_oracle(seed: int) -> tuple[bool, dict]:
    sweeps = 10**5
    out = {}
    ok = True
    for label, g, params in (
        ("fk_cycle4_q2_p0.5", build_cycle(4), FKParams(0.5, 2.0)),
        ("fk_rect2x1_q3_p0.6", build_rectangle(2, 1), FKParams(0.6, 3.0)),
    ):
        exact = fk_exact(g, params).edge_marginals
        est, err = fk_sample(g, params, sweeps, burn_in=1000, seed=seed).edge_marginals()
        z = _max_z(est, err, exact)
        out[label] = {"max_abs_z": z}
        ok &= z <= 4.0
    dom = build_hex_domain(2)
    for label, params in (("loop_r2_xc1_n1", LoopParams(x_c(1.0), 1.0)), ("loop_r2_x0.8_n1.5", LoopParams(0.8, 1.5))):
        exact = loop_exact(dom, params)
        s = loop_sample(dom, params, sweeps, burn_in=1000, seed=seed)
        est, err = s.edge_marginals()
        z_edges = _max_z(est, err, exact.edge_marginals)
        loops = s.mean_loops()
        z_loops = abs(loops.mean - exact.mean_loops) / loops.stderr
        out[label] = {"max_abs_z_edges": z_edges, "z_loop_count": z_loops}
        ok &= z_edges <= 4.0 and z_loops <= 4.0
    return ok, out


def check_parafermion(seed: int, sigma_fn: Callable[[float], float] = sigma) -> tuple[bool, dict]:
    dom = build_hex_domain(2)
    ok = True
    rows = []
    for n in (0.0, 0.5, 1.0, 1.5, 2.0):
        s = sigma_fn(n)
        xc = x_c(n)
        at = float(np.abs(elementary_integrals(observable_field(dom, n, xc, s))).max())
        off = min(float(np.abs(elementary_integrals(observable_field(dom, n, xc * f, s))).max()) for f in (0.85, 1.15))
        shifted = float(np.abs(elementary_integrals(observable_field(dom, n, xc, s + 0.1))).max())
        rows.append({"n": n, "sigma": s, "max_at_critical": at, "min_over_x_perturbations": off, "max_sigma_shift": shifted})
        ok &= at < 1e-10 and off > 1e-4 and shifted > 1e-4
    return ok, {"rows": rows}


def check_connective(seed: int) -> tuple[bool, dict]:
    c = saw_counts(24)
    ratio = float(c[24] / c[23])
    ok = c[1] == 3 and c[2] == 6 and c[6] == 90 and abs(ratio - MU_HEX) / MU_HEX <= 0.02
    return bool(ok), {"c1": c[1], "c2": c[2], "c6": c[6], "c23": c[23], "c24": c[24], "ratio": ratio, "mu": MU_HEX}


def _influence_cases():
    hexd = build_hex_domain(1)
    cases = []
    for n, m in ((1, 1), (2, 1), (2, 2), (3, 2), (3, 3)):
        g = build_rectangle(n, m)
        cases.append((f"rect{n}x{m}_crossing", g, crossing_function(g)))
    g = build_box(2, 1)
    cases.append(("box2_1_one_arm", g, one_arm_function(g)))
    g = build_box(1, 6)
    cases.append(("box1_6_one_arm", g, one_arm_function(g)))
    g = build_cycle(4)
    cases.append(("cycle4_antipodal", g, connects(g, [0], [2])))
    cases.append(("hex1_antipodal", hexd, connects(hexd, [0], [hexd.vertex_count - 1])))
    return cases


def check_sharpness(seed: int) -> tuple[bool, dict]:
    worst = 0.0
    ok = True
    for _, g, f in _influence_cases():
        for p in (0.3, 0.5, 0.7):
            r = influence_exact(g, p, f)
            worst = max(worst, abs(r.derivative - r.derivative_fd))
    ok &= worst <= 1e-8
    osss = []
    for n in (2, 4):
        for p in (0.35, 0.5):
            rep = osss_check(build_box(2, n), p, 20000, seed + n)
            osss.append({"n": n, "p": p, "variance": rep.variance.mean, "rhs": rep.rhs.mean,
                         "slack": rep.slack.mean, "slack_stderr": rep.slack.stderr})
            ok &= rep.slack.mean >= -4.0 * rep.slack.stderr
    return ok, {"max_derivative_gap": worst, "osss": osss}


def check_dynamical(seed: int) -> tuple[bool, dict]:
    p = 0.3
    times = [0.0, 0.5, 1.0, 2.0]
    snaps = dynamical_snapshots(build_box(2, 4), p, times, 2000, seed)
    ok = True
    marg = []
    for t, est in zip(times, edge_marginals_over_time(snaps)):
        marg.append({"t": t, "mean": est.mean, "stderr": est.stderr})
        ok &= est.within(p, 4.0)
    lags = []
    for j, t in enumerate(times[1:], start=1):
        est = lag_autocovariance(snaps, 0, j)
        target = p * (1 - p) * math.exp(-t)
        lags.append({"t": t, "autocov": est.mean, "stderr": est.stderr, "expected": target})
        ok &= est.within(target, 4.0)
    return ok, {"marginals": marg, "autocovariance": lags}


CHECKS: dict[int, tuple[str, Callable, float]] = {
    1: ("crossing self-duality", check_crossing_duality, 30.0),
    2: ("p_c recovery from S-curves", check_pc_recovery, 300.0),
    3: ("FK self-dual point", check_self_dual, 300.0),
    4: ("subcritical decay", check_subcritical, 180.0),
    5: ("Edwards-Sokal equivalence", check_edwards_sokal, 10.0),
    6: ("MCMC against the exact oracle", check_mcmc_oracle, 120.0),
    7: ("parafermionic contour integrals", check_parafermion, 120.0),
    8: ("connective constant", check_connective, 120.0),
    9: ("sharpness identities", check_sharpness, 120.0),
    10: ("dynamical percolation", check_dynamical, 60.0),
}
DETERMINISM = 11


@dataclass
class VerifyReport:
    seed: int
    results: list[CheckResult]
    timings: dict[int, float]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "checks": [r.as_dict() for r in self.results]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def result(self, number: int) -> CheckResult:
        return next(r for r in self.results if r.number == number)


def run_check(number: int, seed: int, overrides: dict | None = None) -> tuple[CheckResult, float]:
    """Run one check; exceptions become failed results carrying the error message."""
    name, fn, _ = CHECKS[number]
    kwargs = (overrides or {}).get(number, {})
    t0 = time.perf_counter()
    try:
        passed, metrics = fn(seed, **kwargs)
        result = CheckResult(number, name, bool(passed), _clean(metrics))
    except EnumerationCapError as exc:
        result = CheckResult(number, name, False, {}, f"EnumerationCapError: {exc}")
    except Exception as exc:  # noqa: BLE001 - every failure must surface in the report
        last = traceback.format_exception_only(type(exc), exc)[-1].strip()
        result = CheckResult(number, name, False, {}, last)
    return result, time.perf_counter() - t0


def _run_once(numbers, seed, overrides, log):
    results, timings = [], {}
    for k in numbers:
        res, dt = run_check(k, seed, overrides)
        results.append(res)
        timings[k] = dt
        if log is not None:
            log(f"[{'PASS' if res.passed else 'FAIL'}] {k:2d} {res.name} ({dt:.1f} s)")
    return results, timings


def verify(
    seed: int = DEFAULT_SEED,
    only=None,
    determinism: bool = True,
    overrides: dict | None = None,
    log: Callable[[str], None] | None = None,
) -> VerifyReport:
    """Run the selected checks (all by default).

    With ``determinism`` the same checks run a second time and the two
    serialized reports must match byte for byte; this is check 11.
    """
    numbers = sorted(CHECKS) if only is None else sorted(k for k in only if k in CHECKS)
    results, timings = _run_once(numbers, seed, overrides, log)
    if determinism and (only is None or DETERMINISM in only):
        first = json.dumps([r.as_dict() for r in results], sort_keys=True)
        t0 = time.perf_counter()
        again, _ = _run_once(numbers, seed, overrides, None)
        second = json.dumps([r.as_dict() for r in again], sort_keys=True)
        same = first == second
        timings[DETERMINISM] = time.perf_counter() - t0
        results.append(CheckResult(DETERMINISM, "determinism of verify", same, {"bytes": len(first), "identical": same}))
        if log is not None:
            log(f"[{'PASS' if same else 'FAIL'}] {DETERMINISM:2d} determinism of verify ({timings[DETERMINISM]:.1f} s)")
    return VerifyReport(seed, results, timings)
