"""Exact count statistics for M independent pairs measured globally.

Every party measures all of its particles in one basis and only records the
totals ``(n_plus, n_minus)``.  A :class:`VoteRule` turns the totals into a
binary (or ternary) outcome.  All combinatorial weights are evaluated in log
space.

Two evaluation routes exist on purpose.  :func:`vote_marginal` and
:func:`vote_joint` sum binomial/multinomial terms directly; the batched
helpers (:func:`plus_count_table`, :func:`iter_plus_count_tables`) build the
same count laws by convolving one pair at a time, vectorised over arrays of
single-pair probabilities.  The optimisers in :mod:`bell_eval` use the
batched route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import InvalidInputError
from .pair_core import PairOutcomeDist

NORM_TOL = 1e-10


@dataclass(frozen=True)
class VoteRule:
    """Threshold vote on the number of "+" detections.

    ``kind`` is ``"majority"``, ``"fraction"`` or ``"unanimity"``.  With ``m``
    detected particles the outcome is "+" iff ``n_plus >= threshold(m)``.  A
    ternary rule additionally outputs "-" iff ``n_minus >= threshold(m)`` and
    discards everything in between.  ``empty_plus`` selects the outcome of an
    event with no detection at all ("-" by default).
    """

    kind: str = "majority"
    ratio: Fraction | None = None
    ternary: bool = False
    empty_plus: bool = False

    def __post_init__(self):
        if self.kind not in ("majority", "fraction", "unanimity"):
            raise InvalidInputError(f"unknown vote kind {self.kind!r}")
        if self.kind == "fraction":
            if self.ratio is None:
                raise InvalidInputError("a fraction vote needs a ratio")
            r = Fraction(self.ratio)
            if not (Fraction(1, 2) < r < 1):
                raise InvalidInputError(f"fraction vote ratio must lie in (1/2, 1), got {r}")
            object.__setattr__(self, "ratio", r)

    @classmethod
    def majority(cls, **kw) -> "VoteRule":
        return cls("majority", **kw)

    @classmethod
    def unanimity(cls, **kw) -> "VoteRule":
        return cls("unanimity", **kw)

    @classmethod
    def fraction(cls, ratio, **kw) -> "VoteRule":
        return cls("fraction", Fraction(ratio), **kw)

    @classmethod
    def from_name(cls, name: str, **kw) -> "VoteRule":
        """Parse ``"majority"``, ``"unanimity"`` or a ratio such as ``"3/4"``."""
        name = name.strip().lower()
        if name in ("majority", "maj"):
            return cls.majority(**kw)
        if name in ("unanimity", "una", "unanimous"):
            return cls.unanimity(**kw)
        return cls.fraction(Fraction(name), **kw)

    @property
    def name(self) -> str:
        base = str(self.ratio) if self.kind == "fraction" else self.kind
        return f"ternary-{base}" if self.ternary else base

    def threshold(self, m: int) -> int:
        """Minimum number of "+" counts among ``m`` detections for a "+" outcome."""
        if m < 0:
            raise InvalidInputError("detected count must be non-negative")
        if self.kind == "majority":
            return (m + 1) // 2
        if self.kind == "unanimity":
            return m
        # ceil(r m) with exact rational arithmetic
        return -((-self.ratio.numerator * m) // self.ratio.denominator)

    def plus_mask(self, size: int) -> np.ndarray:
        """Boolean table over ``(n_plus, n_minus)`` in ``[0, size]^2``: outcome is "+"."""
        return self._masks(size)[0]

    def minus_mask(self, size: int) -> np.ndarray:
        return self._masks(size)[1]

    def _masks(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        n_plus, n_minus = np.meshgrid(np.arange(size + 1), np.arange(size + 1), indexing="ij")
        m = n_plus + n_minus
        thresholds = np.array([self.threshold(k) for k in range(2 * size + 1)])
        plus = (n_plus >= thresholds[m]) & (m > 0)
        if self.ternary:
            if np.any((2 * thresholds[1:] <= np.arange(1, 2 * size + 1)) & (np.arange(1, 2 * size + 1) <= size)):
                raise InvalidInputError(f"ternary {self.name} vote has overlapping outcome sets")
            minus = (n_minus >= thresholds[m]) & (m > 0)
        else:
            minus = ~plus & (m > 0)
        if self.empty_plus:
            plus[0, 0] = True
        else:
            minus[0, 0] = True
        return plus, minus


MAJORITY = VoteRule.majority()
UNANIMITY = VoteRule.unanimity()
TWO_THIRDS = VoteRule.fraction(Fraction(2, 3))
THREE_QUARTERS = VoteRule.fraction(Fraction(3, 4))


@dataclass(frozen=True)
class DetectionModel:
    eta: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.eta <= 1.0):
            raise InvalidInputError(f"detection efficiency must lie in [0, 1], got {self.eta!r}")


@dataclass(frozen=True)
class ChInputs:
    """Vote-level "+" probabilities for one settings pair.

    Fields may be floats or arrays of a common shape (batched evaluation).
    """

    p_plus_a: float | np.ndarray
    p_plus_b: float | np.ndarray
    p_pp: float | np.ndarray

    def check(self, tol: float = NORM_TOL) -> "ChInputs":
        for v in (self.p_plus_a, self.p_plus_b, self.p_pp):
            v = np.asarray(v)
            if np.any(v < -tol) or np.any(v > 1 + tol):
                raise InvalidInputError("CH input outside [0, 1]")
        if np.any(np.asarray(self.p_pp) > np.minimum(self.p_plus_a, self.p_plus_b) + tol):
            raise InvalidInputError("joint '++' probability exceeds a marginal")
        return self

    def scaled(self, weight) -> "ChInputs":
        return ChInputs(weight * self.p_plus_a, weight * self.p_plus_b, weight * self.p_pp)

    def __add__(self, other: "ChInputs") -> "ChInputs":
        return ChInputs(
            self.p_plus_a + other.p_plus_a,
            self.p_plus_b + other.p_plus_b,
            self.p_pp + other.p_pp,
        )


class CountJointDistribution:
    """Joint law of ``(n_plus_A, n_minus_A, n_plus_B, n_minus_B)``.

    Stored densely as ``probs[a_plus, a_minus, b_plus, b_minus]`` with every
    axis running over ``0..size``; undetected particles are implied.
    """

    def __init__(self, probs: np.ndarray, pairs: int):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 4 or len(set(probs.shape)) != 1:
            raise InvalidInputError("count distribution must be a hypercube array")
        self.probs = probs
        self.pairs = int(pairs)

    @property
    def size(self) -> int:
        return self.probs.shape[0] - 1

    def total(self) -> float:
        return math.fsum(self.probs.ravel())

    def items(self):
        for idx in zip(*np.nonzero(self.probs)):
            yield tuple(int(i) for i in idx), float(self.probs[idx])

    def as_dict(self) -> dict[tuple[int, int, int, int], float]:
        return dict(self.items())

    def marginal_a(self) -> np.ndarray:
        """Law of Alice's ``(n_plus, n_minus)``."""
        return self.probs.sum(axis=(2, 3))

    def marginal_b(self) -> np.ndarray:
        return self.probs.sum(axis=(0, 1))

    def __repr__(self):
        return f"CountJointDistribution(pairs={self.pairs}, size={self.size}, total={self.total():.12f})"


# --------------------------------------------------------------------------
# direct log-space sums


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _empty(rule: VoteRule) -> float:
    return 1.0 if rule.empty_plus else 0.0


def vote_marginal(M: int, dist: PairOutcomeDist, rule: VoteRule, party: str = "A") -> float:
    """Probability that a party's vote over ``M`` perfectly detected particles is "+"."""
    if M < 0:
        raise InvalidInputError("pair count must be non-negative")
    if M == 0:
        return _empty(rule)
    p = dist.p_plus_a if party == "A" else dist.p_plus_b
    n = np.arange(rule.threshold(M), M + 1)
    logs = _log_binom(M, n) + xlogy(n, p) + xlog1py(M - n, -p)
    return math.fsum(np.exp(logs))


def _compositions(M: int) -> np.ndarray:
    """All ``(n_pp, n_pm, n_mp, n_mm)`` with non-negative entries summing to ``M``."""
    i, j, k = np.meshgrid(*(np.arange(M + 1),) * 3, indexing="ij")
    keep = i + j + k <= M
    n = np.stack([i[keep], j[keep], k[keep]], axis=1)
    return np.column_stack([n, M - n.sum(axis=1)])


def vote_joint(M: int, dist: PairOutcomeDist, rule_a: VoteRule, rule_b: VoteRule | None = None) -> float:
    """Probability that both votes come out "+" for ``M`` perfectly detected pairs."""
    rule_b = rule_a if rule_b is None else rule_b
    if M < 0:
        raise InvalidInputError("pair count must be non-negative")
    if M == 0:
        return _empty(rule_a) * _empty(rule_b)
    n = _compositions(M)
    keep = (n[:, 0] + n[:, 1] >= rule_a.threshold(M)) & (n[:, 0] + n[:, 2] >= rule_b.threshold(M))
    n = n[keep]
    if len(n) == 0:
        return 0.0
    p = np.array(dist.as_tuple())
    logs = gammaln(M + 1) - gammaln(n + 1).sum(axis=1) + xlogy(n, p).sum(axis=1)
    return math.fsum(np.exp(logs))


# --------------------------------------------------------------------------
# batched count tables


def _as_prob_arrays(dist):
    if isinstance(dist, PairOutcomeDist):
        dist = dist.as_tuple()
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in dist))
    return arrays


def iter_plus_count_tables(dist, M_max: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(M, T_M)`` for ``M = 0..M_max`` where ``T_M[..., a, b]`` is the
    probability of ``a`` "+" counts for Alice and ``b`` for Bob among ``M``
    perfectly detected pairs.

    ``dist`` is a :class:`PairOutcomeDist` or a 4-tuple of broadcastable arrays
    ``(p_pp, p_pm, p_mp, p_mm)``; leading axes of the tables follow that shape.
    """
    p_pp, p_pm, p_mp, p_mm = (v[..., None, None] for v in _as_prob_arrays(dist))
    table = np.ones(p_pp.shape[:-2] + (1, 1))
    yield 0, table
    for M in range(1, M_max + 1):
        nxt = np.zeros(p_pp.shape[:-2] + (M + 1, M + 1))
        nxt[..., :M, :M] += p_mm * table
        nxt[..., 1:, :M] += p_pm * table
        nxt[..., :M, 1:] += p_mp * table
        nxt[..., 1:, 1:] += p_pp * table
        table = nxt
        yield M, table


def plus_count_table(dist, M: int) -> np.ndarray:
    """``T[..., a, b]`` for a fixed number ``M`` of perfectly detected pairs."""
    table = None
    for _, table in iter_plus_count_tables(dist, M):
        pass
    return table


def binary_inputs_from_table(table: np.ndarray, rule_a: VoteRule, rule_b: VoteRule, detected: int,
                             threshold_count: int | None = None) -> ChInputs:
    """CH inputs from a "+"-count table when each party detected exactly ``detected`` particles.

    Thresholds are taken at ``threshold_count`` (default ``detected``); passing
    the emitted number instead applies the rule to the emitted count.
    """
    if detected == 0:
        ea, eb = _empty(rule_a), _empty(rule_b)
        return ChInputs(ea + 0 * table[..., 0, 0], eb + 0 * table[..., 0, 0], ea * eb + 0 * table[..., 0, 0])
    basis = detected if threshold_count is None else threshold_count
    na, nb = rule_a.threshold(basis), rule_b.threshold(basis)
    tail_a = table[..., na:, :]
    return ChInputs(
        tail_a.sum(axis=(-1, -2)),
        table[..., :, nb:].sum(axis=(-1, -2)),
        tail_a[..., :, nb:].sum(axis=(-1, -2)),
    )


def table_inputs(table: np.ndarray, detected: int, rule_a: VoteRule, rule_b: VoteRule | None = None,
                 convention: str = "none", threshold_count: int | None = None) -> ChInputs:
    """Like :func:`binary_inputs_from_table` but also handles ternary rules.

    ``convention`` only matters for ternary rules; see :func:`ternary_vote_probs`.
    """
    rule_b = rule_a if rule_b is None else rule_b
    if not (rule_a.ternary or rule_b.ternary) or convention == "none" or detected == 0:
        return binary_inputs_from_table(table, rule_a, rule_b, detected, threshold_count)
    if convention != "postselect":
        raise InvalidInputError(f"unknown discard convention {convention!r}")
    n = np.arange(detected + 1)
    vecs = []
    for rule in (rule_a, rule_b):
        N = rule.threshold(detected if threshold_count is None else threshold_count)
        if rule.ternary and 2 * N <= detected:
            raise InvalidInputError(f"ternary threshold N={N} overlaps for {detected} particles")
        plus = (n >= N).astype(float)
        definite = ((n >= N) | (detected - n >= N)).astype(float) if rule.ternary else np.ones_like(plus)
        vecs.append((plus, definite))
    (plus_a, def_a), (plus_b, def_b) = vecs
    accepted = np.einsum("...ij,i,j->...", table, def_a, def_b)
    safe = np.where(accepted > 0, accepted, 1.0)
    return ChInputs(
        np.einsum("...ij,i,j->...", table, plus_a, def_b) / safe,
        np.einsum("...ij,i,j->...", table, def_a, plus_b) / safe,
        np.einsum("...ij,i,j->...", table, plus_a, plus_b) / safe,
    )


def lossless_inputs(M: int, dist, rule_a: VoteRule, rule_b: VoteRule | None = None) -> ChInputs:
    """Batched equivalent of ``(vote_marginal, vote_marginal, vote_joint)``."""
    rule_b = rule_a if rule_b is None else rule_b
    return binary_inputs_from_table(plus_count_table(dist, M), rule_a, rule_b, M)


# --------------------------------------------------------------------------
# inefficient detectors


def _category_probs(dist, eta):
    """Per-pair probabilities of Alice in {+,-,0} x Bob in {+,-,0} (0 = undetected)."""
    p_pp, p_pm, p_mp, p_mm = _as_prob_arrays(dist)
    eta = np.asarray(eta, dtype=float)
    lost = 1.0 - eta
    pa, pb = p_pp + p_pm, p_pp + p_mp
    q = {
        ("+", "+"): eta**2 * p_pp,
        ("+", "-"): eta**2 * p_pm,
        ("-", "+"): eta**2 * p_mp,
        ("-", "-"): eta**2 * p_mm,
        ("+", "0"): eta * lost * pa,
        ("-", "0"): eta * lost * (1 - pa),
        ("0", "+"): eta * lost * pb,
        ("0", "-"): eta * lost * (1 - pb),
        ("0", "0"): lost**2 + 0 * p_pp,
    }
    return q


_STEP = {"+": (1, 0), "-": (0, 1), "0": (0, 0)}


def efficiency_count_tensor(M: int, dist, eta) -> np.ndarray:
    """Batched ``probs[..., a+, a-, b+, b-]`` for ``M`` pairs with detector efficiency ``eta``."""
    q = _category_probs(dist, eta)
    batch = np.broadcast(*q.values()).shape
    out = np.zeros(batch + (M + 1,) * 4)
    out[..., 0, 0, 0, 0] = 1.0
    for step in range(M):
        nxt = np.zeros_like(out)
        top = step + 1
        for (sa, sb), prob in q.items():
            da, ea = _STEP[sa]
            db, eb = _STEP[sb]
            src = out[..., :top, :top, :top, :top]
            nxt[..., da : da + top, ea : ea + top, db : db + top, eb : eb + top] += (
                np.asarray(prob)[..., None, None, None, None] * src
            )
        out = nxt
    return out


def count_distribution_with_efficiency(M: int, dist: PairOutcomeDist, det: DetectionModel) -> CountJointDistribution:
    """Exact joint law of the detected counts for ``M`` pairs and efficiency ``det.eta``."""
    if M < 1:
        raise InvalidInputError("need at least one pair")
    return CountJointDistribution(efficiency_count_tensor(M, dist, det.eta), M)


def inputs_from_counts(probs: np.ndarray, rule_a: VoteRule, rule_b: VoteRule | None = None) -> ChInputs:
    """Binary-vote CH inputs from a (possibly batched) 4-index count tensor.

    Each party thresholds on its own detected total.
    """
    rule_b = rule_a if rule_b is None else rule_b
    size = probs.shape[-1] - 1
    plus_a = rule_a.plus_mask(size).astype(float)
    plus_b = rule_b.plus_mask(size).astype(float)
    return ChInputs(
        np.einsum("...ijkl,ij->...", probs, plus_a),
        np.einsum("...ijkl,kl->...", probs, plus_b),
        np.einsum("...ijkl,ij,kl->...", probs, plus_a, plus_b),
    )


def vote_probs_with_efficiency(M: int, dist: PairOutcomeDist, det: DetectionModel, rule: VoteRule,
                               rule_b: VoteRule | None = None) -> ChInputs:
    counts = count_distribution_with_efficiency(M, dist, det)
    return inputs_from_counts(counts.probs, rule, rule_b)


# --------------------------------------------------------------------------
# one particle lost on each side


def one_loss_plus_table(M: int, dist) -> np.ndarray:
    """Batched law of the "+" counts ``(a, b)`` over the ``M - 1`` particles each party keeps.

    With probability ``1/M`` both losses hit the same pair; otherwise two
    distinct pairs are broken and each party keeps one unpaired particle.
    """
    if M < 2:
        raise InvalidInputError("one loss on each side needs at least two pairs")
    p_pp, p_pm, p_mp, p_mm = _as_prob_arrays(dist)
    pa = (p_pp + p_pm)[..., None, None]
    pb = (p_pp + p_mp)[..., None, None]
    tables = {}
    for m, t in iter_plus_count_tables((p_pp, p_pm, p_mp, p_mm), M - 1):
        if m >= M - 2:
            tables[m] = t
    intact, broken = tables[M - 1], tables[M - 2]
    ext = np.zeros_like(intact)
    k = M - 1
    ext[..., : k, : k] += (1 - pa) * (1 - pb) * broken
    ext[..., 1:, : k] += pa * (1 - pb) * broken
    ext[..., : k, 1:] += (1 - pa) * pb * broken
    ext[..., 1:, 1:] += pa * pb * broken
    return intact / M + ext * (M - 1) / M


def _embed_fixed_total(table: np.ndarray, total: int) -> np.ndarray:
    """Lift a "+"-count table with fixed totals to a 4-index count tensor."""
    out = np.zeros(table.shape[:-2] + (total + 1,) * 4)
    a = np.arange(total + 1)
    out[..., a[:, None], total - a[:, None], a[None, :], total - a[None, :]] = table
    return out


def one_loss_each_side_distribution(M: int, dist: PairOutcomeDist) -> CountJointDistribution:
    """Detected-count law when exactly one particle per side is lost, uniformly at random."""
    table = one_loss_plus_table(M, dist)
    return CountJointDistribution(_embed_fixed_total(table, M - 1), M)


# --------------------------------------------------------------------------
# ternary votes


def ternary_vote_probs(counts: CountJointDistribution, N: int, convention: str = "none") -> ChInputs:
    """CH inputs for the three-outcome vote ``n+ >= N -> +``, ``n- >= N -> -``, else discard.

    ``convention="none"`` keeps discarded events in the denominator (they are
    simply never "+").  ``convention="postselect"`` conditions on both parties
    giving a definite outcome; the resulting data are subject to the detection
    loophole.
    """
    size = counts.size
    if 2 * N <= size:
        raise InvalidInputError(f"ternary threshold N={N} overlaps for {size} particles per side")
    return ternary_inputs_from_counts(counts.probs, N, convention)


def _ternary_masks(size: int, N: int):
    n_plus, n_minus = np.meshgrid(np.arange(size + 1), np.arange(size + 1), indexing="ij")
    plus = n_plus >= N
    minus = n_minus >= N
    return plus.astype(float), (plus | minus).astype(float)


def ternary_inputs_from_counts(probs: np.ndarray, N: int, convention: str = "none") -> ChInputs:
    size = probs.shape[-1] - 1
    plus, definite = _ternary_masks(size, N)
    if convention == "none":
        return ChInputs(
            np.einsum("...ijkl,ij->...", probs, plus),
            np.einsum("...ijkl,kl->...", probs, plus),
            np.einsum("...ijkl,ij,kl->...", probs, plus, plus),
        )
    if convention == "postselect":
        accepted = np.einsum("...ijkl,ij,kl->...", probs, definite, definite)
        with np.errstate(invalid="ignore", divide="ignore"):
            safe = np.where(accepted > 0, accepted, 1.0)
            return ChInputs(
                np.einsum("...ijkl,ij,kl->...", probs, plus, definite) / safe,
                np.einsum("...ijkl,ij,kl->...", probs, definite, plus) / safe,
                np.einsum("...ijkl,ij,kl->...", probs, plus, plus) / safe,
            )
    raise InvalidInputError(f"unknown discard convention {convention!r}")
