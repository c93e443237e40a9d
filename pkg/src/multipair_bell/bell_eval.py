"""CH functional, scenario evaluation and optimisation.

A :class:`Scenario` fixes the source, particle model, detection model, vote
rule and noise.  :func:`maximize_ch` searches measurement settings (and the
pair state angle for independent pairs); the threshold solvers wrap it in a
root search over a noise or efficiency parameter.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import poisson

from .errors import ConfigurationError, InvalidInputError, UndefinedMetricError
from .pair_core import FourAngleSettings, PairState, PlanarSettings, planar_pair_probs
from .symmetric_fock import (
    NoiseChannelSpec,
    SymmetricState,
    apply_one_loss_each_side,
    apply_rotation_noise,
    inputs_from_count_matrix,
    phi_state,
    werner_weight_from_sigma,
    wigner_d,
)
from .vote_tally import (
    MAJORITY,
    ChInputs,
    VoteRule,
    efficiency_count_tensor,
    inputs_from_counts,
    iter_plus_count_tables,
    one_loss_plus_table,
    plus_count_table,
    table_inputs,
)

VIOLATION_TOL = 1e-9
CH_ALGEBRAIC_MAX = 0.25
# postselected runs are conditioned on the remote outcome too, so their
# marginals may signal and only the trivial bound applies
CH_SIGNALLING_MAX = 2.0
POISSON_TAIL_TOL = 1e-10
# bound on batch_size * (M+1)^4 when building efficiency count tensors
_TENSOR_BUDGET = 4_000_000


# --------------------------------------------------------------------------
# CH and Reid's S


@dataclass(frozen=True)
class ChInputSet:
    """Vote-level inputs for the four settings pairs."""

    a1b1: ChInputs
    a1b2: ChInputs
    a2b1: ChInputs
    a2b2: ChInputs


def ch_value(inputs: ChInputSet):
    """``-P_A(A1) - P_B(B1) + P(A1B1) + P(A1B2) + P(A2B1) - P(A2B2)``; local bound 0."""
    return (
        -inputs.a1b1.p_plus_a
        - inputs.a1b1.p_plus_b
        + inputs.a1b1.p_pp
        + inputs.a1b2.p_pp
        + inputs.a2b1.p_pp
        - inputs.a2b2.p_pp
    )


def reid_s(inputs: ChInputSet) -> float:
    """``S = (CH + B) / B`` with ``B = P_A(A2) + P_B(B2)``; ``S > 1`` signals a violation."""
    b = float(inputs.a2b2.p_plus_a + inputs.a2b2.p_plus_b)
    if b <= 0.0:
        raise UndefinedMetricError("Reid's S is undefined when both second-setting marginals vanish")
    return (float(ch_value(inputs)) + b) / b


def is_violation(value: float) -> bool:
    return value > VIOLATION_TOL


# --------------------------------------------------------------------------
# scenarios


PARTICLES = ("independent", "symmetric")
DETECTIONS = ("lossless", "efficiency", "one_loss")
NOISES = ("none", "werner", "rotation")
DISCARDS = ("none", "postselect")
THRESHOLD_BASES = ("detected", "emitted")


def poisson_truncation(mu: float, tail_tol: float = POISSON_TAIL_TOL) -> int:
    """Smallest ``M_max`` with ``P[M > M_max] < tail_tol``."""
    m = int(poisson.isf(tail_tol, mu))
    while poisson.sf(m, mu) >= tail_tol:
        m += 1
    while m > 0 and poisson.sf(m - 1, mu) < tail_tol:
        m -= 1
    return m


@dataclass(frozen=True)
class Scenario:
    """One of the studied source/detection/noise combinations.

    Exactly one of ``M`` (fixed pair number) and ``mu`` (Poisson mean) is set.
    Werner noise ``epsilon`` applies to independent pairs, rotation noise
    ``sigma`` to the symmetric state.  ``discard`` selects how ternary votes
    treat discarded events.  ``threshold_basis`` chooses whether vote
    thresholds under one loss per side use the detected or the emitted count.
    """

    M: int | None = None
    mu: float | None = None
    M_max: int | None = None
    particles: str = "independent"
    detection: str = "lossless"
    eta: float = 1.0
    rule: VoteRule = MAJORITY
    noise: str = "none"
    epsilon: float = 0.0
    sigma: float = 0.0
    discard: str = "none"
    threshold_basis: str = "detected"
    quadrature: tuple[int, int | None, int | None] = (24, None, None)

    def __post_init__(self):
        if (self.M is None) == (self.mu is None):
            raise ConfigurationError("set exactly one of M (fixed source) and mu (Poisson source)")
        if self.particles not in PARTICLES:
            raise ConfigurationError(f"particles must be one of {PARTICLES}")
        if self.detection not in DETECTIONS:
            raise ConfigurationError(f"detection must be one of {DETECTIONS}")
        if self.noise not in NOISES:
            raise ConfigurationError(f"noise must be one of {NOISES}")
        if self.discard not in DISCARDS:
            raise ConfigurationError(f"discard must be one of {DISCARDS}")
        if self.threshold_basis not in THRESHOLD_BASES:
            raise ConfigurationError(f"threshold_basis must be one of {THRESHOLD_BASES}")
        if self.threshold_basis == "emitted" and self.detection != "one_loss":
            raise ConfigurationError("the emitted-count threshold basis applies to the one-loss model only")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigurationError("eta must lie in [0, 1]")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")
        if self.M is not None and self.M < 1:
            raise ConfigurationError("M must be at least 1")
        if self.mu is not None:
            if not self.mu > 0:
                raise ConfigurationError("mu must be positive")
            if self.M_max is not None and poisson.sf(self.M_max, self.mu) >= POISSON_TAIL_TOL:
                raise ConfigurationError(
                    f"truncation M_max={self.M_max} leaves a Poisson tail >= {POISSON_TAIL_TOL:g}; "
                    f"use M_max >= {poisson_truncation(self.mu)}"
                )
        if self.detection != "efficiency" and self.eta != 1.0:
            raise ConfigurationError("eta is only meaningful with detection='efficiency'")
        if self.detection == "one_loss" and self.M is not None and self.M < 2:
            raise ConfigurationError("one loss on each side needs M >= 2")
        if self.particles == "independent":
            if self.noise == "rotation":
                raise ConfigurationError("rotation noise is defined for the symmetric state only")
            if self.mu is not None and self.detection == "one_loss":
                raise ConfigurationError("the one-loss model is defined for a fixed number of pairs")
            if self.rule.ternary and (self.mu is not None or self.detection == "efficiency"):
                raise ConfigurationError("ternary votes are supported for fixed M without efficiency loss")
        else:
            if self.mu is not None:
                raise ConfigurationError("the symmetric state is studied at fixed M only")
            if self.detection == "efficiency":
                raise ConfigurationError("detector efficiency is modelled for independent pairs only")
            if self.noise == "werner":
                raise ConfigurationError("use rotation noise for the symmetric state")
            if self.rule.ternary:
                raise ConfigurationError("symmetric-state votes are binary")

    @property
    def source(self) -> str:
        return "poisson" if self.mu is not None else "fixed"

    @property
    def werner_w(self) -> float:
        return 1.0 - self.epsilon if self.noise == "werner" else 1.0

    @property
    def truncation(self) -> int:
        return self.M_max if self.M_max is not None else poisson_truncation(self.mu)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def describe(self) -> str:
        src = f"M={self.M}" if self.M is not None else f"mu={self.mu:g}"
        parts = [self.particles, src, self.detection, self.rule.name]
        if self.detection == "efficiency":
            parts.append(f"eta={self.eta:g}")
        if self.noise == "werner":
            parts.append(f"eps={self.epsilon:g}")
        if self.noise == "rotation":
            parts.append(f"sigma={self.sigma:g}")
        if self.rule.ternary:
            parts.append(f"discard={self.discard}")
        if self.threshold_basis == "emitted":
            parts.append("thresholds on emitted M")
        return " ".join(parts)


# --------------------------------------------------------------------------
# evaluation


def _chunks(n: int, size: int):
    size = max(1, size)
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _stack_inputs(parts: list[ChInputs], shape) -> ChInputs:
    return ChInputs(
        *(np.concatenate([np.ravel(getattr(p, f)) for p in parts]).reshape(shape)
          for f in ("p_plus_a", "p_plus_b", "p_pp"))
    )


def empty_event_inputs(rule_a: VoteRule, rule_b: VoteRule | None = None) -> ChInputs:
    rule_b = rule_a if rule_b is None else rule_b
    ea = 1.0 if rule_a.empty_plus else 0.0
    eb = 1.0 if rule_b.empty_plus else 0.0
    return ChInputs(ea, eb, ea * eb)


def poisson_mix(mu: float, per_M: Callable[[int], ChInputs], rule: VoteRule,
                M_max: int | None = None) -> ChInputs:
    """``sum_M p(M) per_M(M)`` for a Poisson number of pairs, truncated at ``M_max``.

    The ``M = 0`` term follows the rule's empty-event policy.
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    M_max = poisson_truncation(mu) if M_max is None else M_max
    if poisson.sf(M_max, mu) >= POISSON_TAIL_TOL:
        raise ConfigurationError(f"Poisson tail beyond M_max={M_max} exceeds {POISSON_TAIL_TOL:g}")
    weights = poisson.pmf(np.arange(M_max + 1), mu)
    total = empty_event_inputs(rule).scaled(weights[0])
    for M in range(1, M_max + 1):
        total = total + per_M(M).scaled(weights[M])
    return total


class ScenarioEvaluator:
    """Batched CH inputs for a fixed scenario as a function of settings (and ``theta``)."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._state = self._symmetric_state() if scenario.particles == "symmetric" else None

    def _symmetric_state(self) -> SymmetricState:
        sc = self.scenario
        state = phi_state(sc.M)
        if sc.noise == "rotation" and sc.sigma > 0:
            n_beta, n_theta, n_phi = sc.quadrature
            state = apply_rotation_noise(state, NoiseChannelSpec(sc.sigma, n_beta, n_theta, n_phi))
        if sc.detection == "one_loss":
            state = apply_one_loss_each_side(state)
        return state

    @property
    def _threshold_count(self) -> int | None:
        return self.scenario.M if self.scenario.threshold_basis == "emitted" else None

    @property
    def state(self) -> SymmetricState | None:
        return self._state

    # -- single settings pair ------------------------------------------------

    def pair_inputs(self, a, b, theta=np.pi / 4) -> ChInputs:
        if self._state is not None:
            return self._symmetric_pair(a, b)
        return self._independent_pair(a, b, theta)

    def _independent_pair(self, a, b, theta) -> ChInputs:
        sc = self.scenario
        rule = sc.rule
        dist = planar_pair_probs(theta, sc.werner_w, a, b)
        if sc.detection == "lossless":
            if sc.source == "fixed":
                return table_inputs(plus_count_table(dist, sc.M), sc.M, rule, rule, sc.discard)
            weights = poisson.pmf(np.arange(sc.truncation + 1), sc.mu)
            total = None
            for M, table in iter_plus_count_tables(dist, sc.truncation):
                term = table_inputs(table, M, rule, rule).scaled(weights[M])
                total = term if total is None else total + term
            return total
        if sc.detection == "one_loss":
            return table_inputs(one_loss_plus_table(sc.M, dist), sc.M - 1, rule, rule, sc.discard,
                                self._threshold_count)
        # finite detection efficiency
        if sc.source == "fixed":
            return self._efficiency_inputs(sc.M, dist)
        zero = np.zeros(np.shape(dist[0]))
        return poisson_mix(
            sc.mu, lambda M: self._efficiency_inputs(M, dist), rule, sc.truncation
        ) + ChInputs(zero, zero, zero)

    def _efficiency_inputs(self, M: int, dist) -> ChInputs:
        sc = self.scenario
        shape = np.shape(dist[0])
        flat = [np.ravel(p) for p in dist]
        parts = []
        for sl in _chunks(flat[0].size, _TENSOR_BUDGET // (M + 1) ** 4):
            tensor = efficiency_count_tensor(M, [p[sl] for p in flat], sc.eta)
            parts.append(inputs_from_counts(tensor, sc.rule))
        return _stack_inputs(parts, shape)

    def _symmetric_pair(self, a, b) -> ChInputs:
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        shape = a.shape
        flat_a, flat_b = a.ravel(), b.ravel()
        d_a, d_b = self._state.shape
        weights = np.array([w for w, _ in self._state.branches])
        mats = np.stack([X for _, X in self._state.branches])
        parts = []
        for sl in _chunks(flat_a.size, max(1, 2_000_000 // mats.size)):
            da = wigner_d(d_a - 1, flat_a[sl])
            db = wigner_d(d_b - 1, flat_b[sl])
            amps = np.swapaxes(da, -1, -2)[:, None] @ mats[None] @ db[:, None]
            P = np.einsum("r,nrkl->nkl", weights, amps.real**2 + amps.imag**2)
            parts.append(inputs_from_count_matrix(P, self.scenario.rule, threshold_count=self._threshold_count))
        return _stack_inputs(parts, shape)

    # -- four settings pairs -------------------------------------------------

    def inputs(self, a1, a2, b1, b2, theta=np.pi / 4) -> ChInputSet:
        return ChInputSet(
            self.pair_inputs(a1, b1, theta),
            self.pair_inputs(a1, b2, theta),
            self.pair_inputs(a2, b1, theta),
            self.pair_inputs(a2, b2, theta),
        )

    def ch(self, a1, a2, b1, b2, theta=np.pi / 4):
        return ch_value(self.inputs(a1, a2, b1, b2, theta))

    def ch_planar(self, alpha, theta=np.pi / 4):
        alpha = np.asarray(alpha, dtype=float)
        return self.ch(0.0 * alpha, 2 * alpha, alpha, -alpha, theta)


# --------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class OptimizerSpec:
    """Grid-then-refine search parameters.

    ``grid`` points per dimension cover ``alpha in (0, pi/2]`` and
    ``theta in (0, theta_max]``.  Four-angle searches seed Nelder-Mead from a
    coarse grid over mirror-symmetric settings and from the planar optimum.
    ``theta_max = pi/2`` also searches states whose larger Schmidt weight sits
    on |11>, which helps rules that are not symmetric under "+" <-> "-".
    """

    grid: int = 64
    xatol: float = 1e-8
    fatol: float = 1e-15
    four_angle_grid: int = 20
    four_angle_starts: int = 4
    maxiter: int = 4000
    theta_max: float = math.pi / 4

    def __post_init__(self):
        if self.grid < 2 or self.four_angle_grid < 2 or self.four_angle_starts < 1:
            raise ConfigurationError("optimizer grids need at least two points and one start")
        if not (0.0 < self.theta_max <= math.pi / 2):
            raise ConfigurationError("theta_max must lie in (0, pi/2]")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ChValue:
    """Best CH found together with where it was found."""

    value: float
    settings: PlanarSettings | FourAngleSettings
    state: PairState | str
    provenance: dict = field(default_factory=dict, compare=False)
    bound: float = field(default=CH_ALGEBRAIC_MAX, compare=False)

    def __post_init__(self):
        if self.value > self.bound + VIOLATION_TOL:
            raise ArithmeticError(f"CH={self.value} exceeds the maximum {self.bound:g} for these statistics")

    @property
    def violates(self) -> bool:
        return is_violation(self.value)

    @property
    def alpha(self) -> float:
        return self.settings.alpha if isinstance(self.settings, PlanarSettings) else math.nan

    @property
    def theta(self) -> float:
        return self.state.theta if isinstance(self.state, PairState) else math.nan


OVER_MODES = ("alpha", "alpha_theta", "four_angle")


def _bound_of(scenario: Scenario) -> float:
    postselected = scenario.rule.ternary and scenario.discard == "postselect"
    return CH_SIGNALLING_MAX if postselected else CH_ALGEBRAIC_MAX


def _state_of(scenario: Scenario, theta: float) -> PairState | str:
    if scenario.particles == "independent":
        return PairState(float(theta), scenario.werner_w)
    return f"symmetric(M={scenario.M}, noise={scenario.noise}, sigma={scenario.sigma:g}, detection={scenario.detection})"


def evaluate_ch(scenario: Scenario, settings: PlanarSettings | FourAngleSettings,
                theta: float = np.pi / 4) -> ChValue:
    """CH at fixed settings and state angle, without optimisation."""
    ev = ScenarioEvaluator(scenario)
    value = float(ev.ch(*settings.angles(), theta))
    return ChValue(value, settings, _state_of(scenario, theta), {"mode": "fixed"},
                   _bound_of(scenario))


def maximize_ch(scenario: Scenario, over: str = "alpha_theta", theta: float | None = None,
                optimizer: OptimizerSpec = OptimizerSpec(),
                evaluator: ScenarioEvaluator | None = None) -> ChValue:
    """Maximise CH over the planar family (``over='alpha'`` or ``'alpha_theta'``)
    or over four independent angles and ``theta`` (``over='four_angle'``).

    The symmetric state has no ``theta``; ``'alpha_theta'`` is then rejected.
    A fixed ``theta`` may be passed for ``over='alpha'`` (default ``pi/4``).
    """
    if over not in OVER_MODES:
        raise ConfigurationError(f"over must be one of {OVER_MODES}")
    symmetric = scenario.particles == "symmetric"
    if symmetric and over == "alpha_theta":
        raise ConfigurationError("the symmetric state has no theta parameter; use over='alpha'")
    ev = evaluator or ScenarioEvaluator(scenario)
    if over == "alpha" or (over == "four_angle" and symmetric):
        best = _maximize_alpha(ev, np.pi / 4 if theta is None else theta, optimizer)
    else:
        best = _maximize_alpha_theta(ev, optimizer)
    if over == "four_angle":
        best = _maximize_four_angle(ev, best, optimizer, symmetric)
    return best


def _alpha_grid(n: int) -> np.ndarray:
    return np.pi / 2 * np.arange(1, n + 1) / n


def _theta_grid(n: int, theta_max: float) -> np.ndarray:
    return theta_max * np.arange(1, n + 1) / n


def _maximize_alpha(ev: ScenarioEvaluator, theta: float, opt: OptimizerSpec) -> ChValue:
    grid = _alpha_grid(opt.grid)
    values = np.asarray(ev.ch_planar(grid, theta))
    k = int(np.argmax(values))
    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda a: -float(ev.ch_planar(a, theta)), bounds=(lo, hi), method="bounded",
        options={"xatol": opt.xatol},
    )
    alpha, value = (float(res.x), -float(res.fun)) if -res.fun >= values[k] else (float(grid[k]), float(values[k]))
    prov = {"mode": "alpha", "grid_index": k, "grid_value": float(values[k]), "refine": "bounded", "nfev": int(res.nfev)}
    return ChValue(value, PlanarSettings(alpha), _state_of(ev.scenario, theta), prov, _bound_of(ev.scenario))


def _maximize_alpha_theta(ev: ScenarioEvaluator, opt: OptimizerSpec) -> ChValue:
    alphas, thetas = _alpha_grid(opt.grid), _theta_grid(opt.grid, opt.theta_max)
    A, T = np.meshgrid(alphas, thetas, indexing="ij")
    values = np.asarray(ev.ch_planar(A, T))
    k = np.unravel_index(int(np.argmax(values)), values.shape)
    starts = [k, (int(np.argmax(values[:, -1])), len(thetas) - 1)]
    bounds = [(0.0, np.pi / 2), (0.0, opt.theta_max)]
    step = np.array([alphas[0], thetas[0]])
    best = (float(values[k]), float(A[k]), float(T[k]), None)
    for s in dict.fromkeys(starts):
        x0 = np.array([A[s], T[s]])
        res = minimize(
            lambda x: -float(ev.ch_planar(x[0], x[1])), x0, method="Nelder-Mead", bounds=bounds,
            options={"xatol": opt.xatol, "fatol": opt.fatol, "maxiter": opt.maxiter,
                     "initial_simplex": [x0, x0 + [step[0], 0], x0 + [0, -step[1]]]},
        )
        if -res.fun > best[0]:
            best = (-float(res.fun), float(res.x[0]), float(res.x[1]), res)
    value, alpha, theta, res = best
    prov = {"mode": "alpha_theta", "grid_index": tuple(int(i) for i in k), "grid_value": float(values[k]),
            "refine": "nelder-mead", "nfev": int(res.nfev) if res is not None else 0,
            "nit": int(res.nit) if res is not None else 0}
    return ChValue(value, PlanarSettings(alpha), _state_of(ev.scenario, theta), prov, _bound_of(ev.scenario))


def _maximize_four_angle(ev: ScenarioEvaluator, planar: ChValue, opt: OptimizerSpec, symmetric: bool) -> ChValue:
    n = opt.four_angle_grid
    angles = -np.pi + 2 * np.pi * np.arange(1, n + 1) / n
    if symmetric:
        D, F = np.meshgrid(angles, angles, indexing="ij")
        T = np.full_like(D, np.pi / 4)
    else:
        D, F, T = np.meshgrid(angles, angles, _theta_grid(n, opt.theta_max), indexing="ij")
    # mirror-symmetric seeds: A1 = d, B1 = -d, A2 = -f, B2 = f
    values = np.asarray(ev.ch(D, -F, -D, F, T)).ravel()
    order = np.argsort(values)[::-1][: opt.four_angle_starts]
    a = planar.settings.angles()
    starts = [np.array([*a, planar.theta])] if not symmetric else [np.array(a)]
    for i in order:
        d, f, t = D.ravel()[i], F.ravel()[i], T.ravel()[i]
        starts.append(np.array([d, -f, -d, f, t]) if not symmetric else np.array([d, -f, -d, f]))
    bounds = [(-np.pi, np.pi)] * 4 + ([] if symmetric else [(0.0, opt.theta_max)])

    def objective(x):
        theta = np.pi / 4 if symmetric else x[4]
        return -float(ev.ch(x[0], x[1], x[2], x[3], theta))

    best_x, best_v, nfev = starts[0], planar.value, 0
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": opt.xatol, "fatol": opt.fatol, "maxiter": opt.maxiter,
                                "maxfev": 2 * opt.maxiter, "adaptive": True})
        nfev += int(res.nfev)
        if -res.fun > best_v:
            best_x, best_v = res.x, -float(res.fun)
    theta = np.pi / 4 if symmetric else float(best_x[4])
    prov = {"mode": "four_angle", "grid_points": int(values.size), "starts": len(starts),
            "refine": "nelder-mead", "nfev": nfev, "planar_value": planar.value}
    return ChValue(best_v, FourAngleSettings(*(float(v) for v in best_x[:4])), _state_of(ev.scenario, theta), prov,
                   _bound_of(ev.scenario))


def _params_of(best: ChValue, over: str, symmetric: bool) -> np.ndarray:
    if over == "four_angle":
        angles = list(best.settings.angles()) if isinstance(best.settings, FourAngleSettings) else \
            list(PlanarSettings(best.alpha).angles())
        return np.array(angles if symmetric else angles + [best.theta])
    if over == "alpha_theta":
        return np.array([best.alpha, best.theta])
    return np.array([best.alpha])


def refine_ch(scenario: Scenario, start: ChValue, over: str = "alpha_theta",
              optimizer: OptimizerSpec = OptimizerSpec(), theta: float | None = None) -> ChValue:
    """Local re-optimisation of CH for ``scenario`` starting from a previous optimum."""
    symmetric = scenario.particles == "symmetric"
    if over not in OVER_MODES or (symmetric and over == "alpha_theta"):
        raise ConfigurationError(f"cannot refine over {over!r} for this scenario")
    ev = ScenarioEvaluator(scenario)
    x0 = _params_of(start, over, symmetric)
    if over == "alpha":
        th = start.theta if theta is None and not math.isnan(start.theta) else (np.pi / 4 if theta is None else theta)
        h = 4 * np.pi / 2 / optimizer.grid
        res = minimize_scalar(lambda a: -float(ev.ch_planar(a, th)),
                              bounds=(max(0.0, x0[0] - h), min(np.pi / 2, x0[0] + h)), method="bounded",
                              options={"xatol": optimizer.xatol})
        return ChValue(-float(res.fun), PlanarSettings(float(res.x)), _state_of(scenario, th),
                       {"mode": "alpha", "refine": "bounded", "warm_start": True, "nfev": int(res.nfev)},
                       _bound_of(scenario))
    if over == "alpha_theta":
        bounds = [(0.0, np.pi / 2), (0.0, optimizer.theta_max)]
        fun = lambda x: -float(ev.ch_planar(x[0], x[1]))
    else:
        bounds = [(-np.pi, np.pi)] * 4 + ([] if symmetric else [(0.0, optimizer.theta_max)])
        fun = lambda x: -float(ev.ch(x[0], x[1], x[2], x[3], np.pi / 4 if symmetric else x[4]))
    x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
    res = minimize(fun, x0, method="Nelder-Mead", bounds=bounds,
                   options={"xatol": optimizer.xatol, "fatol": optimizer.fatol, "maxiter": optimizer.maxiter,
                            "maxfev": 2 * optimizer.maxiter, "adaptive": len(x0) > 2})
    prov = {"mode": over, "refine": "nelder-mead", "warm_start": True, "nfev": int(res.nfev), "nit": int(res.nit)}
    if over == "alpha_theta":
        return ChValue(-float(res.fun), PlanarSettings(float(res.x[0])), _state_of(scenario, res.x[1]), prov,
                       _bound_of(scenario))
    th = np.pi / 4 if symmetric else float(res.x[4])
    return ChValue(-float(res.fun), FourAngleSettings(*(float(v) for v in res.x[:4])), _state_of(scenario, th), prov,
                   _bound_of(scenario))


# --------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class ThresholdResult:
    """Outcome of a noise or efficiency threshold search.

    ``flag`` is ``"ok"``, ``"no_violation"`` (no violation even at the most
    favourable parameter value) or ``"bracket"`` (violation persists at the
    least favourable value tried).  ``optimum`` is the best violating point
    found closest to the threshold.
    """

    value: float
    flag: str
    optimum: ChValue | None
    probes: int
    sigma: float | None = None

    @property
    def ok(self) -> bool:
        return self.flag == "ok"


def _bisect_threshold(make, favourable: float, unfavourable: float, tol: float, over: str,
                      optimizer: OptimizerSpec, max_rounds: int = 4):
    """Locate where the maximal CH stops violating between two parameter values.

    ``make(p)`` builds the scenario at parameter ``p``; CH is assumed monotone
    in ``p`` at fixed settings, so a point that violates at ``p`` is a valid
    warm start for any more favourable value.  Probes refine locally from the
    best violating optimum; each round ends with a global search just on the
    non-violating side, which restarts the bisection if it finds a violation.
    Returns ``(threshold, optimum, probes)``; ``optimum`` is None if
    ``favourable`` itself does not violate.
    """
    probes = 1
    best = maximize_ch(make(favourable), over, optimizer=optimizer)
    if not best.violates:
        return favourable, None, probes
    good, bad = favourable, unfavourable
    for _ in range(max_rounds):
        while abs(bad - good) > tol:
            mid = 0.5 * (good + bad)
            probes += 1
            trial = refine_ch(make(mid), best, over, optimizer)
            if trial.violates:
                good, best = mid, trial
            else:
                bad = mid
        probes += 1
        check = maximize_ch(make(bad), over, optimizer=optimizer)
        if not check.violates:
            break
        good, best, bad = bad, check, unfavourable
    return 0.5 * (good + bad), best, probes


def noise_resistance(scenario: Scenario, over: str = "alpha_theta", optimizer: OptimizerSpec = OptimizerSpec(),
                     tol: float = 1e-6) -> ThresholdResult:
    """Largest white-noise fraction (or rotation width, converted to the
    equivalent Werner fraction) still allowing a violation after re-optimising."""
    if scenario.particles == "independent":
        def make(eps):
            return scenario.replace(noise="werner", epsilon=float(eps))

        if not maximize_ch(make(1.0), over, optimizer=optimizer).violates:
            eps, best, probes = _bisect_threshold(make, 0.0, 1.0, tol, over, optimizer)
            if best is None:
                return ThresholdResult(0.0, "no_violation", maximize_ch(make(0.0), over, optimizer=optimizer), probes)
            return ThresholdResult(float(eps), "ok", best, probes + 1)
        return ThresholdResult(1.0, "bracket", None, 1)

    def make_sigma(sigma):
        if sigma == 0:
            return scenario.replace(noise="none", sigma=0.0)
        return scenario.replace(noise="rotation", sigma=float(sigma))

    hi, extra = 0.5, 0
    while maximize_ch(make_sigma(hi), over, optimizer=optimizer).violates:
        extra += 1
        hi *= 2
        if hi > 4.0:
            return ThresholdResult(1.0, "bracket", None, extra, sigma=hi)
    sigma, best, probes = _bisect_threshold(make_sigma, 0.0, hi, tol, over, optimizer)
    if best is None:
        return ThresholdResult(0.0, "no_violation", maximize_ch(make_sigma(0.0), over, optimizer=optimizer),
                               probes + extra + 1, sigma=0.0)
    eps = 1.0 - float(werner_weight_from_sigma(sigma))
    return ThresholdResult(eps, "ok", best, probes + extra + 1, sigma=float(sigma))


def critical_efficiency(M: int, rule: VoteRule = MAJORITY, over: str = "four_angle",
                        optimizer: OptimizerSpec = OptimizerSpec(), tol: float = 1e-4,
                        epsilon: float = 0.0, lower: float = 0.5) -> ThresholdResult:
    """Smallest detector efficiency at which ``M`` independent pairs still violate CH."""
    noise = "werner" if epsilon > 0 else "none"

    def make(eta):
        return Scenario(M=M, detection="efficiency", eta=float(eta), rule=rule, noise=noise, epsilon=epsilon)

    extra = 0
    while maximize_ch(make(lower), over, optimizer=optimizer).violates:
        extra += 1
        lower /= 2
        if lower < 1e-3:
            return ThresholdResult(lower, "bracket", None, extra)
    eta, best, probes = _bisect_threshold(make, 1.0, lower, tol, over, optimizer)
    if best is None:
        return ThresholdResult(1.0, "no_violation", maximize_ch(make(1.0), over, optimizer=optimizer),
                               probes + extra + 1)
    return ThresholdResult(float(eta), "ok", best, probes + extra + 1)
