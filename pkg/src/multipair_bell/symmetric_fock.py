"""Indistinguishable photons: the symmetric state, spin-j rotations, noise and loss.

A state of ``2M`` photons with ``n_A`` photons on Alice's side and ``n_B`` on
Bob's is written in the photon-number bases ``|k>_A |l>_B`` where ``k`` is the
number of photons in Alice's mode 0 (the "+" mode of a polarizer at angle 0).
Identifying ``k`` with the spin projection ``m = k - n_A/2`` turns a polarizer
rotation into a spin-``n_A/2`` rotation, so an amplitude matrix ``X``
transforms as ``d(a)^T X d(b)`` under planar measurement angles ``a`` and
``b``.  Mixed states are weighted lists of such amplitude matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .pair_core import PairOutcomeDist
from .vote_tally import ChInputs, VoteRule

NORM_TOL = 1e-10
QUAD_TOL = 1e-8


# --------------------------------------------------------------------------
# angular momentum


@lru_cache(maxsize=None)
def spin_matrices(two_j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(J_x, J_y, J_z)`` for spin ``j = two_j / 2`` in the basis ``m = -j..j``."""
    if two_j < 0:
        raise InvalidInputError("spin must be non-negative")
    j = two_j / 2
    m = np.arange(two_j + 1) - j
    j_plus = np.diag(np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1)), -1).astype(complex)
    jx = (j_plus + j_plus.T) / 2
    jy = (j_plus - j_plus.T) / 2j
    jz = np.diag(m).astype(complex)
    for mat in (jx, jy, jz):
        mat.setflags(write=False)
    return jx, jy, jz


@lru_cache(maxsize=None)
def _jy_eig(two_j: int):
    lam, vecs = np.linalg.eigh(spin_matrices(two_j)[1])
    lam.setflags(write=False)
    vecs.setflags(write=False)
    return lam, vecs


def wigner_d(two_j: int, beta) -> np.ndarray:
    """Real orthogonal ``exp(-i beta J_y)``; ``beta`` may be an array (leading axes)."""
    lam, vecs = _jy_eig(two_j)
    phase = np.exp(-1j * np.asarray(beta, dtype=float)[..., None] * lam)
    return np.einsum("ik,...k,jk->...ij", vecs, phase, vecs.conj()).real


@dataclass(frozen=True)
class SpinRotation:
    """``exp(-i beta n.J)`` on spin ``two_j / 2`` for a unit axis ``n``."""

    two_j: int
    beta: float
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = np.asarray(self.axis, dtype=float)
        if abs(n @ n - 1.0) > 1e-12:
            raise InvalidInputError("rotation axis must be a unit vector")
        jx, jy, jz = spin_matrices(self.two_j)
        lam, vecs = np.linalg.eigh(n[0] * jx + n[1] * jy + n[2] * jz)
        mat = (vecs * np.exp(-1j * self.beta * lam)) @ vecs.conj().T
        if n[0] == 0.0 and n[2] == 0.0:
            mat = mat.real
        object.__setattr__(self, "matrix", mat)


# --------------------------------------------------------------------------
# states


@dataclass
class SymmetricState:
    """Mixture of pure branches ``sum_kl X_kl |k>_A |l>_B``.

    ``branches`` is a list of ``(weight, X)``; the amplitude matrices need not
    be normalised individually but ``sum(weight * |X|_F^2)`` must be one.
    """

    M: int
    branches: list[tuple[float, np.ndarray]]

    def __post_init__(self):
        if not self.branches:
            raise InvalidInputError("a state needs at least one branch")
        shape = self.branches[0][1].shape
        if any(np.shape(X) != shape or len(shape) != 2 for _, X in self.branches):
            raise InvalidInputError("all branches must share one 2-D shape")
        if any(w < 0 for w, _ in self.branches):
            raise InvalidInputError("branch weights must be non-negative")
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise InvalidInputError(f"state norm is {self.norm()!r}, expected 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.branches[0][1].shape

    def norm(self) -> float:
        return math.fsum(w * float(np.sum(np.abs(X) ** 2)) for w, X in self.branches)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Weights ``(r,)`` and amplitude matrices ``(r, d_A, d_B)``."""
        weights = np.array([w for w, _ in self.branches], dtype=float)
        return weights, np.stack([np.asarray(X) for _, X in self.branches])

    def density_matrix(self) -> np.ndarray:
        """Density operator on ``d_A * d_B`` with row-major index ``k * d_B + l``."""
        weights, mats = self.stacked()
        vecs = mats.reshape(len(weights), -1)
        return np.einsum("r,ri,rj->ij", weights, vecs, vecs.conj())

    def compressed(self, cutoff: float = 1e-14) -> "SymmetricState":
        """Equivalent mixture with at most ``d_A * d_B`` orthogonal branches."""
        rho = self.density_matrix()
        lam, vecs = np.linalg.eigh(rho)
        keep = lam > cutoff * max(lam[-1], 0.0)
        lam, vecs = lam[keep], vecs[:, keep]
        lam = lam / lam.sum()
        branches = [(float(p), vecs[:, i].reshape(self.shape)) for i, p in enumerate(lam)]
        return SymmetricState(self.M, branches)


def phi_state(M: int) -> SymmetricState:
    """Uniform Schmidt state ``sum_k |k>|k> / sqrt(M + 1)``."""
    if M < 1:
        raise InvalidInputError("need at least one pair")
    return SymmetricState(M, [(1.0, np.eye(M + 1) / math.sqrt(M + 1))])


# --------------------------------------------------------------------------
# counting statistics


def count_distribution(state: SymmetricState, a: float, b: float) -> np.ndarray:
    """``P[k, l]``: probability of ``k`` "+" photons for Alice and ``l`` for Bob."""
    d_a, d_b = state.shape
    weights, mats = state.stacked()
    amps = wigner_d(d_a - 1, a).T @ mats @ wigner_d(d_b - 1, b)
    return np.tensordot(weights, amps.real**2 + amps.imag**2, axes=1)


def inputs_from_count_matrix(P: np.ndarray, rule_a: VoteRule, rule_b: VoteRule | None = None,
                             threshold_count: int | None = None) -> ChInputs:
    """CH inputs from ``P[k, l]``; thresholds use the photon number of each side
    unless ``threshold_count`` (e.g. the emitted number under losses) is given."""
    rule_b = rule_a if rule_b is None else rule_b
    na = rule_a.threshold(P.shape[-2] - 1 if threshold_count is None else threshold_count)
    nb = rule_b.threshold(P.shape[-1] - 1 if threshold_count is None else threshold_count)
    return ChInputs(
        P[..., na:, :].sum(axis=(-1, -2)),
        P[..., :, nb:].sum(axis=(-1, -2)),
        P[..., na:, nb:].sum(axis=(-1, -2)),
    )


def vote_probs_symmetric(state: SymmetricState, a: float, b: float, rule: VoteRule,
                         rule_b: VoteRule | None = None) -> ChInputs:
    """Vote-level CH inputs when every photon on each side is detected."""
    if rule.ternary or (rule_b is not None and rule_b.ternary):
        raise InvalidInputError("symmetric-state votes are binary")
    return inputs_from_count_matrix(count_distribution(state, a, b), rule, rule_b)


def single_photon_probs(state: SymmetricState, a: float, b: float) -> PairOutcomeDist:
    """For a one-photon-per-side state, the four outcome probabilities ``(++, +-, -+, --)``."""
    if state.shape != (2, 2):
        raise InvalidInputError("only defined for one photon on each side")
    P = count_distribution(state, a, b)
    return PairOutcomeDist.from_array([P[1, 1], P[1, 0], P[0, 1], P[0, 0]])


# --------------------------------------------------------------------------
# rotation noise


def werner_weight_from_sigma(sigma) -> float:
    """Werner weight equivalent to one-sided rotation noise on a single pair."""
    s2 = np.asarray(sigma, dtype=float) ** 2
    return (np.exp(-2 * s2) + np.exp(-4 * s2) + np.exp(-6 * s2)) / 3


@dataclass(frozen=True)
class NoiseChannelSpec:
    """Random SU(2) rotation ``exp(-i beta n.sigma)`` with Gaussian ``beta`` and Haar axis.

    ``n_theta`` and ``n_phi`` default to the smallest orders that average the
    axis exactly for the given photon number (at least 16 each).
    """

    sigma: float
    n_beta: int = 24
    n_theta: int | None = None
    n_phi: int | None = None

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise InvalidInputError("sigma must be positive and finite")

    def orders(self, n_photons: int) -> tuple[int, int, int]:
        n_theta = self.n_theta if self.n_theta is not None else max(16, n_photons + 1)
        n_phi = self.n_phi if self.n_phi is not None else max(16, 2 * n_photons + 2)
        if n_theta < n_photons + 1 or n_phi < 2 * n_photons + 1:
            raise ConfigurationError(
                f"axis quadrature ({n_theta}, {n_phi}) is not exact for {n_photons} photons; "
                f"need n_theta >= {n_photons + 1} and n_phi >= {2 * n_photons + 1}"
            )
        return self.n_beta, n_theta, n_phi

    def nodes(self, n_photons: int = 1):
        """Quadrature ``(beta, cos_theta, phi, weight)`` arrays, weights summing to one."""
        n_beta, n_theta, n_phi = self.orders(n_photons)
        x, wx = np.polynomial.hermite_e.hermegauss(n_beta)
        beta = self.sigma * x
        # Gaussian density on beta times the Haar factor sin^2(beta), normalised
        w_beta = wx / math.sqrt(2 * math.pi) * np.sin(beta) ** 2 * 2 / -math.expm1(-2 * self.sigma**2)
        u, wu = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        B, U, F = np.meshgrid(beta, u, phi, indexing="ij")
        W = w_beta[:, None, None] * wu[None, :, None] / (2 * n_phi) * np.ones_like(F)
        total = W.sum()
        if abs(total - 1.0) > QUAD_TOL:
            raise ConfigurationError(
                f"rotation-noise quadrature weights sum to {total!r}; increase n_beta for sigma={self.sigma}"
            )
        return B.ravel(), U.ravel(), F.ravel(), W.ravel()


def rotation_unitaries(n_photons: int, spec: NoiseChannelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Spin-``n/2`` images of the quadrature rotations and their weights."""
    beta, u, phi, weight = spec.nodes(n_photons)
    jx, jy, jz = spin_matrices(n_photons)
    s = np.sqrt(1 - u**2)
    n_j = (s * np.cos(phi))[:, None, None] * jx + (s * np.sin(phi))[:, None, None] * jy + u[:, None, None] * jz
    lam, vecs = np.linalg.eigh(n_j)
    # exp(-i beta n.sigma) acts on spin j as exp(-i 2 beta n.J)
    phase = np.exp(-2j * beta[:, None] * lam)
    unitaries = np.einsum("qik,qk,qjk->qij", vecs, phase, vecs.conj())
    return unitaries, weight


def apply_rotation_noise(state: SymmetricState, spec: NoiseChannelSpec, compress: bool = True) -> SymmetricState:
    """Average Alice's side over the noise rotations.

    With ``compress=False`` the result has one branch ``(w_q, U_q X)`` per
    quadrature node and input branch; by default the mixture is re-expressed
    with orthogonal branches, which leaves every count distribution unchanged.
    """
    unitaries, weight = rotation_unitaries(state.shape[0] - 1, spec)
    if compress:
        w_in, mats = state.stacked()
        out = np.einsum("qij,rjk->qrik", unitaries, mats)
        vecs = out.reshape(len(weight) * len(w_in), -1) * np.sqrt(np.outer(weight, w_in)).reshape(-1, 1)
        rho = vecs.T @ vecs.conj()
        lam, basis = np.linalg.eigh(rho)
        keep = lam > 1e-14 * lam[-1]
        lam, basis = lam[keep], basis[:, keep]
        lam = lam / lam.sum()
        return SymmetricState(state.M, [(float(p), basis[:, i].reshape(state.shape)) for i, p in enumerate(lam)])
    branches = [
        (float(wq * wb), Uq @ X) for wq, Uq in zip(weight, unitaries) for wb, X in state.branches
    ]
    return SymmetricState(state.M, branches)


def fitted_werner_weight(state: SymmetricState) -> float:
    """Least-squares Werner weight of a one-photon-per-side state relative to ``|Phi_1>``."""
    if state.shape != (2, 2):
        raise InvalidInputError("only defined for one photon on each side")
    rho = state.density_matrix()
    target = phi_state(1).density_matrix()
    diff = target - np.eye(4) / 4
    return float(np.real(np.vdot(diff, rho - np.eye(4) / 4)) / np.real(np.vdot(diff, diff)))


# --------------------------------------------------------------------------
# loss


def _annihilators(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Mode-0 and mode-1 annihilation from ``n`` to ``n - 1`` photons, indexed by mode-0 count."""
    a0 = np.zeros((n, n + 1))
    a1 = np.zeros((n, n + 1))
    k = np.arange(n + 1)
    a0[k[1:] - 1, k[1:]] = np.sqrt(k[1:])
    a1[k[:-1], k[:-1]] = np.sqrt(n - k[:-1])
    return a0, a1


def apply_one_loss_each_side(state: SymmetricState) -> SymmetricState:
    """State conditioned on exactly one photon lost from each side."""
    d_a, d_b = state.shape
    if min(d_a, d_b) < 3:
        raise InvalidInputError("one loss on each side needs at least two photons per side")
    ops_a, ops_b = _annihilators(d_a - 1), _annihilators(d_b - 1)
    branches = []
    for w, X in state.branches:
        for x in ops_a:
            for y in ops_b:
                branches.append((w, x @ X @ y.T))
    total = math.fsum(w * float(np.sum(np.abs(Y) ** 2)) for w, Y in branches)
    return SymmetricState(state.M, [(w / total, Y) for w, Y in branches])
