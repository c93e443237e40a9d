"""Sweeps behind the command-line figures and tables.

Every command takes a resolved :class:`RunConfig` and returns a
:class:`Table`: plot-ready rows, fitted scaling laws and named checks.
Rows are produced in axis order regardless of how many workers ran them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .bell_eval import (
    OptimizerSpec,
    Scenario,
    critical_efficiency,
    evaluate_ch,
    maximize_ch,
    noise_resistance,
)
from .entanglement_measures import ratio_report
from .errors import ConfigurationError
from .pair_core import PlanarSettings
from .scaling import exponential_fit, power_fit
from .vote_tally import VoteRule


# --------------------------------------------------------------------------
# configuration and rows


@dataclass
class RunConfig:
    """Resolved settings for one command (defaults, then file, then flags)."""

    command: str
    values: list[float]
    rules: list[str]
    over: str = "alpha_theta"
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    quadrature: tuple[int, int | None, int | None] = (24, None, None)
    options: dict = field(default_factory=dict)
    out: str | None = None
    cache_dir: str = ".multipair_bell_cache"
    workers: int = 1
    check: bool = False

    def vote_rules(self) -> list[VoteRule]:
        return [VoteRule.from_name(r) for r in self.rules]

    def opt(self, key, default=None):
        return self.options.get(key, default)


@dataclass
class ResultRow:
    """One table row: axis value, rule, row kind, CH and threshold with the optimum found.

    Empty cells mean "not applicable"; ``nan`` appears only where a search
    was flagged (no violation at any probed parameter).
    """

    axis: float
    rule: str
    kind: str
    ch: float | None = None
    threshold: float | None = None
    alpha: float | None = None
    theta: float | None = None
    flag: str = ""
    extra: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Table:
    command: str
    axis_name: str
    rows: list[ResultRow]
    extra_columns: list[str] = field(default_factory=list)
    fits: list[dict] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return [self.axis_name, "rule", "kind", "ch", "threshold", "alpha", "theta", "flag",
                *self.extra_columns, "provenance"]

    def select(self, kind: str | None = None, rule: str | None = None, **extra) -> list[ResultRow]:
        out = []
        for r in self.rows:
            if kind is not None and r.kind != kind:
                continue
            if rule is not None and r.rule != rule:
                continue
            if any(r.extra.get(k) != v for k, v in extra.items()):
                continue
            out.append(r)
        return out


def workers_from_env(default: int = 1) -> int:
    value = os.environ.get("MULTIPAIR_BELL_WORKERS")
    if value is None:
        return default
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigurationError(f"MULTIPAIR_BELL_WORKERS must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigurationError("MULTIPAIR_BELL_WORKERS must be at least 1")
    return n


def _pool_map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _planar_row(axis, rule: str, kind: str, best, **extra) -> ResultRow:
    return ResultRow(axis, rule, kind, ch=best.value, alpha=best.alpha,
                     theta=None if math.isnan(best.theta) else best.theta,
                     extra=extra, provenance=best.provenance)


def _angles_extra(best) -> dict:
    a1, a2, b1, b2 = best.settings.angles()
    return {"a1": a1, "a2": a2, "b1": b1, "b2": b2}


def _fit_record(name: str, rule: str, kind: str, xs, ys, fit) -> dict:
    return {"name": name, "rule": rule, "kind": kind, "slope": fit.slope, "intercept": fit.intercept,
            "r2": fit.r2, "x": [float(x) for x in xs]}


def _in_range(x, rng) -> bool:
    return rng[0] <= x <= rng[1]


# --------------------------------------------------------------------------
# jobs (top level so they can be shipped to worker processes)


def _job_maximize(job):
    scenario, over, theta, optimizer = job
    return maximize_ch(scenario, over, theta=theta, optimizer=optimizer)


def _job_evaluate(job):
    scenario, settings, theta = job
    return evaluate_ch(scenario, settings, theta)


def _job_noise(job):
    scenario, over, optimizer, tol = job
    return noise_resistance(scenario, over, optimizer=optimizer, tol=tol)


def _job_critical(job):
    M, rule, over, optimizer, tol = job
    return critical_efficiency(M, rule, over, optimizer=optimizer, tol=tol)


# --------------------------------------------------------------------------
# commands


def cmd_fig_ch_scaling(cfg: RunConfig) -> Table:
    """Maximal CH against M per rule, plus CH at the single-pair optimal settings."""
    Ms = [int(m) for m in cfg.values]
    rules = cfg.vote_rules()
    jobs = [(Scenario(M=M, rule=r), cfg.over, None, cfg.optimizer) for M in Ms for r in rules]
    std = [(Scenario(M=M, rule=r), PlanarSettings(np.pi / 4), np.pi / 4) for M in Ms for r in rules]
    best = _pool_map(_job_maximize, jobs, cfg.workers)
    fixed = _pool_map(_job_evaluate, std, cfg.workers)
    rows = []
    for (sc, *_), b, f in zip(jobs, best, fixed):
        rows.append(_planar_row(sc.M, sc.rule.name, "optimized", b))
        rows.append(ResultRow(sc.M, sc.rule.name, "standard", ch=f.value, alpha=np.pi / 4, theta=np.pi / 4,
                              provenance=f.provenance))
    table = Table("fig-ch-scaling", "M", rows)

    power_range = cfg.opt("power_fit_range", [8, 24])
    exp_range = cfg.opt("exp_fit_range", [2, 10])
    for rule in cfg.rules:
        name = VoteRule.from_name(rule).name
        pts = [(r.axis, r.ch) for r in table.select("optimized", name) if _in_range(r.axis, power_range)]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            table.fits.append(_fit_record("power", name, "optimized", *zip(*pts), power_fit(*zip(*pts))))
        pts = [(r.axis, r.ch) for r in table.select("standard", name) if _in_range(r.axis, power_range)]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            table.fits.append(_fit_record("power", name, "standard", *zip(*pts), power_fit(*zip(*pts))))
        pts = [(r.axis, r.ch) for r in table.select("optimized", name) if _in_range(r.axis, exp_range)]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            table.fits.append(_fit_record("exponential", name, "optimized", *zip(*pts), exponential_fit(*zip(*pts))))

    for r in table.select("optimized"):
        if r.axis == 1:
            target = (math.sqrt(2) - 1) / 2
            table.checks.append(Check(f"M=1 {r.rule} CH = (sqrt2-1)/2", abs(r.ch - target) < 1e-4, f"{r.ch:.10f}"))
    fit = _find_fit(table, "power", "majority", "optimized")
    if fit:
        table.checks.append(Check("majority slope in [-0.6, -0.4]", -0.6 <= fit["slope"] <= -0.4, f"{fit['slope']:.4f}"))
    fit = _find_fit(table, "power", "majority", "standard")
    if fit:
        table.checks.append(Check("majority standard-settings slope in [-1.15, -0.85]",
                                  -1.15 <= fit["slope"] <= -0.85, f"{fit['slope']:.4f}"))
    fit = _find_fit(table, "exponential", "unanimity", "optimized")
    if fit:
        table.checks.append(Check("unanimity exponential fit R^2 > 0.99", fit["r2"] > 0.99, f"{fit['r2']:.5f}"))
        thetas = [r.theta for r in sorted(table.select("optimized", "unanimity"), key=lambda r: r.axis)
                  if _in_range(r.axis, exp_range)]
        table.checks.append(Check("unanimity optimal theta strictly decreasing",
                                  all(b < a for a, b in zip(thetas, thetas[1:])),
                                  " ".join(f"{t:.4f}" for t in thetas)))
    alpha_range = cfg.opt("alpha_check_range", [4, 20])
    devs = [abs(r.alpha / (np.pi / (2 * math.sqrt(2)) / math.sqrt(r.axis)) - 1)
            for r in table.select("optimized", "majority") if _in_range(r.axis, alpha_range)]
    if devs:
        table.checks.append(Check("majority alpha* within 20% of pi/(2 sqrt2) M^-1/2", max(devs) < 0.2,
                                  f"max deviation {max(devs):.4f}"))
    return table


def _find_fit(table: Table, name: str, rule: str, kind: str) -> dict | None:
    for f in table.fits:
        if f["name"] == name and f["rule"] == rule and f["kind"] == kind:
            return f
    return None


def _noise_row(axis, rule_name, res, kind="noise", **extra) -> ResultRow:
    opt = res.optimum
    flagged = not res.ok
    row = ResultRow(axis, rule_name, kind,
                    ch=opt.value if opt is not None else math.nan,
                    threshold=math.nan if flagged else res.value,
                    alpha=opt.alpha if opt is not None and not math.isnan(opt.alpha) else None,
                    theta=opt.theta if opt is not None and not math.isnan(opt.theta) else None,
                    flag=res.flag, extra=extra,
                    provenance={**(opt.provenance if opt is not None else {}), "probes": res.probes})
    if res.sigma is not None:
        row.extra["sigma"] = res.sigma
    return row


def cmd_fig_noise(cfg: RunConfig) -> Table:
    """White-noise resistance against M per rule."""
    Ms = [int(m) for m in cfg.values]
    tol = cfg.opt("tol", 1e-6)
    jobs = [(Scenario(M=M, rule=r), cfg.over, cfg.optimizer, tol) for M in Ms for r in cfg.vote_rules()]
    results = _pool_map(_job_noise, jobs, cfg.workers)
    table = Table("fig-noise", "M", [_noise_row(j[0].M, j[0].rule.name, res) for j, res in zip(jobs, results)])
    fit_range = cfg.opt("fit_range", [4, 16])
    for rule in cfg.vote_rules():
        pts = [(r.axis, r.threshold) for r in table.select("noise", rule.name)
               if _in_range(r.axis, fit_range) and r.flag == "ok"]
        if len(pts) >= 2:
            fit = power_fit(*zip(*pts))
            table.fits.append(_fit_record("power", rule.name, "noise", *zip(*pts), fit))
            table.checks.append(Check(f"{rule.name} noise slope in [-1.15, -0.85]",
                                      -1.15 <= fit.slope <= -0.85, f"{fit.slope:.4f}"))
    for r in table.select("noise"):
        if r.axis == 1 and r.rule == "majority":
            target = 1 - 1 / math.sqrt(2)
            table.checks.append(Check("M=1 eps* = 1 - 1/sqrt2", abs(r.threshold - target) < 1e-5, f"{r.threshold:.8f}"))
    worse = []
    for M in Ms:
        maj = table.select("noise", "majority")
        maj = [r.threshold for r in maj if r.axis == M]
        if not maj:
            continue
        others = [r.threshold for r in table.select("noise") if r.axis == M and r.rule != "majority"]
        if any(o > maj[0] + 1e-6 for o in others):
            worse.append(M)
    table.checks.append(Check("majority most noise-resistant at every M", not worse,
                              f"exceptions at M={worse}" if worse else "all M"))
    theta_range = cfg.opt("theta_check_range", fit_range)
    off = [(r.rule, int(r.axis), round(abs(r.theta - np.pi / 4), 4)) for r in table.select("noise")
           if r.theta is not None and _in_range(r.axis, theta_range) and abs(r.theta - np.pi / 4) > 0.01]
    table.checks.append(Check("optimal theta = pi/4 +- 0.01 at the noise threshold", not off,
                              f"off: {off}" if off else "all within"))
    return table


def cmd_fig_poisson(cfg: RunConfig) -> Table:
    """CH* and noise resistance for a Poisson number of pairs."""
    mus = [float(m) for m in cfg.values]
    noise_mus = [float(m) for m in cfg.opt("noise_values", mus)]
    noise_over = cfg.opt("noise_over", "alpha")
    tol = cfg.opt("tol", 1e-6)
    rules = cfg.vote_rules()
    jobs = [(Scenario(mu=mu, rule=r), cfg.over, None, cfg.optimizer) for mu in mus for r in rules]
    best = _pool_map(_job_maximize, jobs, cfg.workers)
    njobs = [(Scenario(mu=mu, rule=r), noise_over, cfg.optimizer, tol) for mu in noise_mus for r in rules]
    noise = _pool_map(_job_noise, njobs, cfg.workers)
    rows = [_planar_row(j[0].mu, j[0].rule.name, "optimized", b) for j, b in zip(jobs, best)]
    rows += [_noise_row(j[0].mu, j[0].rule.name, res) for j, res in zip(njobs, noise)]
    rows.sort(key=lambda r: (r.axis, r.kind != "optimized"))
    table = Table("fig-poisson", "mu", rows)

    for rule in rules:
        pts = sorted((r.axis, r.ch) for r in table.select("optimized", rule.name))
        if len(pts) >= 3:
            argmax = _refine_mu_argmax(pts, rule, cfg)
            table.fits.append({"name": "argmax_mu", "rule": rule.name, "kind": "optimized", "value": argmax})
            if rule.name == "majority":
                table.checks.append(Check("majority argmax mu in [1, 2]", 1.0 <= argmax <= 2.0, f"{argmax:.4f}"))
    large = cfg.opt("large_mu_range", [8, 16])
    for rule in rules:
        pts = [(r.axis, r.ch) for r in table.select("optimized", rule.name) if _in_range(r.axis, large)]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            fit = power_fit(*zip(*pts))
            table.fits.append(_fit_record("power", rule.name, "optimized", *zip(*pts), fit))
            if rule.name == "majority":
                table.checks.append(Check("majority large-mu CH slope -1/2 +- 0.15", abs(fit.slope + 0.5) <= 0.15,
                                          f"{fit.slope:.4f}"))
    noise_range = cfg.opt("noise_fit_range", [4, 16])
    for rule in rules:
        pts = [(r.axis, r.threshold) for r in table.select("noise", rule.name)
               if _in_range(r.axis, noise_range) and r.flag == "ok"]
        if len(pts) >= 2:
            fit = power_fit(*zip(*pts))
            table.fits.append(_fit_record("power", rule.name, "noise", *zip(*pts), fit))
            table.checks.append(Check(f"{rule.name} eps*(mu) slope -1 +- 0.15", abs(fit.slope + 1) <= 0.15,
                                      f"{fit.slope:.4f}"))
    decay = cfg.opt("decay_range", [4, 16])
    pts = [(r.axis, r.ch) for r in table.select("optimized", "unanimity") if _in_range(r.axis, decay)]
    if len(pts) >= 3 and all(y > 0 for _, y in pts):
        e, p = exponential_fit(*zip(*pts)), power_fit(*zip(*pts))
        table.fits.append(_fit_record("exponential", "unanimity", "optimized", *zip(*pts), e))
        table.fits.append(_fit_record("power", "unanimity", "optimized-decay", *zip(*pts), p))
        table.checks.append(Check("unanimity: exponential R^2 < power-law R^2", e.r2 < p.r2,
                                  f"exp {e.r2:.5f} power {p.r2:.5f}"))
    return table


def _refine_mu_argmax(pts, rule: VoteRule, cfg: RunConfig) -> float:
    xs = [p[0] for p in pts]
    k = int(np.argmax([p[1] for p in pts]))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    if lo == hi:
        return xs[k]
    res = minimize_scalar(
        lambda mu: -maximize_ch(Scenario(mu=float(mu), rule=rule), cfg.over, optimizer=cfg.optimizer).value,
        bounds=(lo, hi), method="bounded", options={"xatol": cfg.opt("argmax_xatol", 1e-3)},
    )
    return float(res.x)


def cmd_fig_efficiency(cfg: RunConfig) -> Table:
    """CH against detector efficiency and the critical efficiency for a few M."""
    etas = [float(e) for e in cfg.values]
    Ms = [int(m) for m in cfg.opt("M_values", [1, 5])]
    tol = cfg.opt("tol", 1e-4)
    rules = cfg.vote_rules()
    jobs = [(Scenario(M=M, detection="efficiency", eta=eta, rule=r), cfg.over, None, cfg.optimizer)
            for M in Ms for r in rules for eta in etas]
    best = _pool_map(_job_maximize, jobs, cfg.workers)
    cjobs = [(M, r, cfg.over, cfg.optimizer, tol) for M in Ms for r in rules]
    crit = _pool_map(_job_critical, cjobs, cfg.workers)
    rows = []
    for (sc, *_), b in zip(jobs, best):
        rows.append(ResultRow(sc.eta, sc.rule.name, "curve", ch=b.value, alpha=None if math.isnan(b.alpha) else b.alpha,
                              theta=b.theta, extra={"M": sc.M, **_angles_extra(b)}, provenance=b.provenance))
    for (M, r, *_), res in zip(cjobs, crit):
        opt = res.optimum
        rows.append(ResultRow(res.value if res.ok else math.nan, r.name, "critical",
                              ch=opt.value if opt is not None else math.nan, threshold=res.value if res.ok else math.nan,
                              theta=opt.theta if opt is not None else None, flag=res.flag,
                              extra={"M": M, **(_angles_extra(opt) if opt is not None else {})},
                              provenance={**(opt.provenance if opt is not None else {}), "probes": res.probes}))
    table = Table("fig-efficiency", "eta", rows, extra_columns=["M", "a1", "a2", "b1", "b2"])
    crit_of = {(r.extra["M"], r.rule): r.threshold for r in table.select("critical")}
    for (M, rule), eta in sorted(crit_of.items()):
        table.fits.append({"name": "critical_eta", "rule": rule, "kind": "critical", "M": M, "value": eta})
    for rule in rules:
        if (1, rule.name) in crit_of:
            v = crit_of[(1, rule.name)]
            table.checks.append(Check(f"M=1 {rule.name} critical eta = 0.667 +- 0.01", abs(v - 2 / 3) <= 0.01, f"{v:.5f}"))
            for M in Ms:
                if M > 1 and (M, rule.name) in crit_of:
                    w = crit_of[(M, rule.name)]
                    table.checks.append(Check(f"M={M} {rule.name} critical eta above M=1", w > v, f"{w:.5f} vs {v:.5f}"))
    return table


def cmd_loss_study(cfg: RunConfig) -> Table:
    """One particle lost on each side: independent pairs and the symmetric state.

    Binary votes on independent pairs are evaluated with thresholds on the
    detected count and, separately, on the emitted count.
    """
    Ms = [int(m) for m in cfg.values]
    sym_Ms = [int(m) for m in cfg.opt("symmetric_values", Ms)]
    conventions = cfg.opt("ternary_conventions", ["none", "postselect"])
    bases = cfg.opt("threshold_bases", ["detected", "emitted"])
    over = cfg.over
    sym_over = cfg.opt("symmetric_over", "alpha")
    modes = [(rule, "", basis) for rule in cfg.vote_rules() for basis in bases]
    if cfg.opt("ternary", True):
        modes += [(VoteRule.unanimity(ternary=True), conv, "detected") for conv in conventions]
    jobs, labels = [], []
    for M in Ms:
        for rule, conv, basis in modes:
            jobs.append((Scenario(M=M, detection="one_loss", rule=rule, discard=conv or "none",
                                  threshold_basis=basis), over, None, cfg.optimizer))
            labels.append(("independent", M, rule.name, conv, basis))
    for M in sym_Ms:
        for name in cfg.opt("symmetric_rules", ["majority"]):
            rule = VoteRule.from_name(name)
            jobs.append((Scenario(M=M, particles="symmetric", detection="one_loss", rule=rule), sym_over, None,
                         cfg.optimizer))
            labels.append(("symmetric", M, rule.name, "", "detected"))
    best = _pool_map(_job_maximize, jobs, cfg.workers)
    rows = []
    for (particles, M, rule, conv, basis), b in zip(labels, best):
        rows.append(ResultRow(M, rule, particles, ch=b.value, alpha=None if math.isnan(b.alpha) else b.alpha,
                              theta=None if math.isnan(b.theta) else b.theta,
                              extra={"convention": conv, "threshold_basis": basis, "violates": int(b.violates)},
                              provenance=b.provenance))
    table = Table("loss-study", "M", rows, extra_columns=["convention", "threshold_basis", "violates"])
    firsts = {}
    for r in rows:
        key = (r.kind, r.rule, r.extra["convention"], r.extra["threshold_basis"])
        firsts.setdefault(key, None)
        if r.extra["violates"] and (firsts[key] is None or r.axis < firsts[key]):
            firsts[key] = int(r.axis)
    for (particles, rule, conv, basis), first in sorted(firsts.items()):
        table.fits.append({"name": "first_violation", "rule": rule, "kind": particles, "convention": conv,
                           "threshold_basis": basis, "value": first})
    for (particles, rule, conv, basis), first in sorted(firsts.items()):
        if particles == "independent" and not rule.startswith("ternary"):
            table.checks.append(Check(f"independent {rule} (thresholds on {basis} count): no violation up to "
                                      f"M={max(Ms)}", first is None, f"first violation {first}"))
        elif particles == "independent":
            table.checks.append(Check(f"independent {rule} ({conv}): first violation at M=5", first == 5,
                                      f"first violation {first}"))
        elif rule == "majority":
            table.checks.append(Check("symmetric majority: first violation at M=10", first == 10,
                                      f"first violation {first}"))
    return table


def cmd_fig_indist(cfg: RunConfig) -> Table:
    """Symmetric state against independent pairs: CH* per rule and rotation-noise resistance."""
    Ms = [int(m) for m in cfg.values]
    rules = cfg.vote_rules()
    noise_Ms = [int(m) for m in cfg.opt("noise_values", [2, 4, 6, 8, 10, 12])]
    noise_rules = [VoteRule.from_name(r) for r in cfg.opt("noise_rules", ["majority", "unanimity"])]
    tol = cfg.opt("tol", 1e-6)
    sym = [(Scenario(M=M, particles="symmetric", rule=r, quadrature=cfg.quadrature), "alpha", None, cfg.optimizer)
           for M in Ms for r in rules]
    ind = [(Scenario(M=M, rule=VoteRule.majority()), "alpha_theta", None, cfg.optimizer) for M in Ms]
    noise = [(Scenario(M=M, particles="symmetric", rule=r, quadrature=cfg.quadrature), "alpha", cfg.optimizer, tol)
             for M in noise_Ms for r in noise_rules]
    best_sym = _pool_map(_job_maximize, sym, cfg.workers)
    best_ind = _pool_map(_job_maximize, ind, cfg.workers)
    res_noise = _pool_map(_job_noise, noise, cfg.workers)
    rows = [_planar_row(j[0].M, j[0].rule.name, "symmetric", b) for j, b in zip(sym, best_sym)]
    rows += [_planar_row(j[0].M, j[0].rule.name, "independent", b) for j, b in zip(ind, best_ind)]
    rows += [_noise_row(j[0].M, j[0].rule.name, res, kind="symmetric_noise") for j, res in zip(noise, res_noise)]
    rows.sort(key=lambda r: (r.axis, ["symmetric", "independent", "symmetric_noise"].index(r.kind)))
    table = Table("fig-indist", "M", rows, extra_columns=["sigma"])

    spread_range = cfg.opt("spread_range", [2, 16])
    spreads = {}
    for M in Ms:
        vals = [r.ch for r in table.select("symmetric") if r.axis == M]
        if _in_range(M, spread_range) and vals and max(vals) > 0:
            spreads[M] = (max(vals) - min(vals)) / max(vals)
    if spreads:
        worst = max(spreads.values())
        table.fits.append({"name": "max_relative_spread", "rule": "all", "kind": "symmetric", "value": worst})
        table.checks.append(Check("symmetric CH* spread across rules < 10%", worst < 0.10, f"max spread {worst:.4f}"))
    slope_range = cfg.opt("slope_range", [2, 16])
    for rule in rules:
        pts = [(r.axis, r.ch) for r in table.select("symmetric", rule.name) if _in_range(r.axis, slope_range)]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            fit = power_fit(*zip(*pts))
            table.fits.append(_fit_record("power", rule.name, "symmetric", *zip(*pts), fit))
            table.checks.append(Check(f"symmetric {rule.name} CH* slope -1 +- 0.2", abs(fit.slope + 1) <= 0.2,
                                      f"{fit.slope:.4f}"))
    bad = []
    for M in Ms:
        if M < 2:
            continue
        ind_v = [r.ch for r in table.select("independent") if r.axis == M]
        sym_v = [r.ch for r in table.select("symmetric", "majority") if r.axis == M]
        if ind_v and sym_v and not ind_v[0] > sym_v[0]:
            bad.append(M)
    table.checks.append(Check("independent majority CH* above symmetric CH* for M >= 2", not bad,
                              f"exceptions {bad}" if bad else "all M"))
    eps = {(r.rule, int(r.axis)): r.threshold for r in table.select("symmetric_noise")}
    worse = [M for M in noise_Ms if ("unanimity", M) in eps and ("majority", M) in eps
             and eps[("unanimity", M)] < eps[("majority", M)]]
    if any(r == "unanimity" for r, _ in eps) and any(r == "majority" for r, _ in eps):
        table.checks.append(Check("symmetric: unanimity eps* >= majority eps*", not worse,
                                  f"exceptions {worse}" if worse else "all M"))
    for rule in noise_rules:
        pts = [(M, eps[(rule.name, M)]) for M in noise_Ms
               if (rule.name, M) in eps and not math.isnan(eps[(rule.name, M)])]
        if len(pts) >= 2:
            fit = power_fit(*zip(*pts))
            table.fits.append(_fit_record("power", rule.name, "symmetric_noise", *zip(*pts), fit))
            if rule.name == "unanimity":
                table.checks.append(Check("symmetric unanimity eps*(M) slope -1 +- 0.2", abs(fit.slope + 1) <= 0.2,
                                          f"{fit.slope:.4f}"))
    return table


def cmd_entanglement(cfg: RunConfig) -> Table:
    """Entanglement with and without the pairing information, over even M."""
    Ms = [int(m) for m in cfg.values]
    rows = [ResultRow(rep.M, "", "entanglement", extra={"E_d": rep.E_d, "E_i": rep.E_i, "ratio": rep.ratio})
            for rep in ratio_report(Ms)]
    table = Table("entanglement", "M", rows, extra_columns=["E_d", "E_i", "ratio"])
    table.checks.append(Check("E_i > E_d for every M", all(r.extra["E_i"] > r.extra["E_d"] for r in rows), ""))
    large = [(r.axis, r.extra["ratio"]) for r in rows if r.axis >= 100]
    if len(large) >= 2:
        gaps = [abs(v - 2) for _, v in sorted(large)]
        table.checks.append(Check("ratio approaches 2 monotonically for M >= 100",
                                  all(b < a for a, b in zip(gaps, gaps[1:])), f"last ratio {sorted(large)[-1][1]:.5f}"))
    return table


COMMANDS = {
    "fig-ch-scaling": cmd_fig_ch_scaling,
    "fig-noise": cmd_fig_noise,
    "fig-poisson": cmd_fig_poisson,
    "fig-efficiency": cmd_fig_efficiency,
    "loss-study": cmd_loss_study,
    "fig-indist": cmd_fig_indist,
    "entanglement": cmd_entanglement,
}


def summarize(tables: dict[str, Table]) -> Table:
    """Summary grid from cached command tables (scaling exponents, thresholds, best votes)."""
    rows = []

    def add(metric, value, source, rule=""):
        rows.append(ResultRow(len(rows), rule, metric, extra={"value": value, "source": source}))

    ch = tables["fig-ch-scaling"]
    for f in ch.fits:
        add(f"ch_{f['kind']}_{f['name']}_slope", f["slope"], "fig-ch-scaling", f["rule"])
        add(f"ch_{f['kind']}_{f['name']}_r2", f["r2"], "fig-ch-scaling", f["rule"])
    wins = _winner_counts(ch.select("optimized"), "ch")
    add("best_vote_independent", _top(wins), "fig-ch-scaling")
    nz = tables["fig-noise"]
    for f in nz.fits:
        add("noise_slope", f["slope"], "fig-noise", f["rule"])
    add("most_noise_robust_independent", _top(_winner_counts(nz.select("noise"), "threshold")), "fig-noise")
    for f in tables["fig-poisson"].fits:
        key = "value" if "value" in f else "slope"
        add(f"poisson_{f['kind']}_{f['name']}", f[key], "fig-poisson", f["rule"])
    for f in tables["fig-efficiency"].fits:
        add(f"critical_eta_M{f['M']}", f["value"], "fig-efficiency", f["rule"])
    for f in tables["loss-study"].fits:
        conv = f" ({f['convention']})" if f.get("convention") else ""
        add(f"first_violation_{f['kind']}{conv}", f["value"], "loss-study", f["rule"])
    ind = tables["fig-indist"]
    for f in ind.fits:
        key = "value" if "value" in f else "slope"
        add(f"indist_{f['kind']}_{f['name']}", f[key], "fig-indist", f["rule"])
    add("most_noise_robust_symmetric", _top(_winner_counts(ind.select("symmetric_noise"), "threshold")), "fig-indist")
    ent = tables["entanglement"]
    if ent.rows:
        last = max(ent.rows, key=lambda r: r.axis)
        add(f"entanglement_ratio_M{int(last.axis)}", last.extra["ratio"], "entanglement")
    table = Table("summary", "index", rows, extra_columns=["value", "source"])
    best = [r for r in rows if r.kind == "best_vote_independent"]
    if best:
        table.checks.append(Check("majority best for independent pairs", best[0].extra["value"] == "majority",
                                  str(best[0].extra["value"])))
    robust = [r for r in rows if r.kind == "most_noise_robust_symmetric"]
    if robust:
        table.checks.append(Check("unanimity most noise-robust for the symmetric state",
                                  robust[0].extra["value"] == "unanimity", str(robust[0].extra["value"])))
    return table


def _winner_counts(rows: list[ResultRow], attr: str) -> dict[str, int]:
    by_axis: dict[float, list[ResultRow]] = {}
    for r in rows:
        v = getattr(r, attr)
        if v is not None and not (isinstance(v, float) and math.isnan(v)):
            by_axis.setdefault(r.axis, []).append(r)
    wins: dict[str, int] = {}
    for group in by_axis.values():
        if len(group) < 2:
            continue
        top = max(getattr(r, attr) for r in group)
        for r in group:
            if getattr(r, attr) >= top - 1e-9:
                wins[r.rule] = wins.get(r.rule, 0) + 1
    return wins


def _top(wins: dict[str, int]) -> str:
    if not wins:
        return ""
    return max(sorted(wins), key=lambda k: wins[k])


def as_fraction_name(rule: str) -> str:
    return str(Fraction(rule)) if "/" in rule else rule
