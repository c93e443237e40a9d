"""Single-pair layer: two-qubit states, measurement directions and outcome probabilities.

The "+" outcome of a measurement along the Bloch direction ``n`` is the
projector ``(1 + n.sigma) / 2``.  Planar directions live in the x-z plane and
are parametrised by their angle from the z axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.x * self.x + self.y * self.y + self.z * self.z
        if not np.isfinite(norm2) or abs(norm2 - 1.0) > UNIT_TOL:
            raise InvalidInputError(f"Bloch vector must have unit length, got |n|^2 = {norm2!r}")

    @classmethod
    def planar(cls, angle: float) -> "BlochVector":
        """Unit vector in the x-z plane at ``angle`` radians from +z towards +x."""
        return cls(float(np.sin(angle)), 0.0, float(np.cos(angle)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def projector(self, sign: int = +1) -> np.ndarray:
        n_sigma = self.x * PAULI_X + self.y * PAULI_Y + self.z * PAULI_Z
        return (IDENTITY_2 + sign * n_sigma) / 2


@dataclass(frozen=True)
class PlanarSettings:
    """One-parameter family: Alice at 0 and 2*alpha, Bob at +alpha and -alpha."""

    alpha: float

    def angles(self) -> tuple[float, float, float, float]:
        a = float(self.alpha)
        return 0.0, 2.0 * a, a, -a


@dataclass(frozen=True)
class FourAngleSettings:
    """Independent planar angles for (A1, A2, B1, B2)."""

    a1: float
    a2: float
    b1: float
    b2: float

    def angles(self) -> tuple[float, float, float, float]:
        return float(self.a1), float(self.a2), float(self.b1), float(self.b2)


def expand_settings(settings: PlanarSettings | FourAngleSettings) -> tuple[BlochVector, ...]:
    """Return the four measurement directions ``(A1, A2, B1, B2)``.

    >>> [round(v.x, 12) for v in expand_settings(PlanarSettings(np.pi / 4))]
    [0.0, 1.0, 0.707106781187, -0.707106781187]
    """
    return tuple(BlochVector.planar(t) for t in settings.angles())


@dataclass(frozen=True)
class PairState:
    """Werner mixture ``w |psi_theta><psi_theta| + (1 - w) 1/4``.

    ``|psi_theta> = cos(theta)|00> + sin(theta)|11>``.
    """

    theta: float
    werner_w: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.werner_w <= 1.0):
            raise InvalidInputError(f"werner_w must lie in [0, 1], got {self.werner_w!r}")

    @property
    def noise(self) -> float:
        return 1.0 - self.werner_w

    def ket(self) -> np.ndarray:
        psi = np.zeros(4, dtype=complex)
        psi[0] = np.cos(self.theta)
        psi[3] = np.sin(self.theta)
        return psi

    def density_matrix(self) -> np.ndarray:
        psi = self.ket()
        return self.werner_w * np.outer(psi, psi.conj()) + (1.0 - self.werner_w) * np.eye(4) / 4


@dataclass(frozen=True)
class PairOutcomeDist:
    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    @property
    def p_plus_a(self) -> float:
        return self.p_pp + self.p_pm

    @property
    def p_plus_b(self) -> float:
        return self.p_pp + self.p_mp

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.p_pp, self.p_pm, self.p_mp, self.p_mm

    @classmethod
    def from_array(cls, p) -> "PairOutcomeDist":
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        return cls(*(float(v) for v in p))


def single_pair_probs(state: PairState, a: BlochVector, b: BlochVector) -> PairOutcomeDist:
    """Joint outcome probabilities of one pair measured along ``a`` (Alice) and ``b`` (Bob)."""
    rho = state.density_matrix()
    probs = []
    for sa in (+1, -1):
        for sb in (+1, -1):
            proj = np.kron(a.projector(sa), b.projector(sb))
            probs.append(np.trace(rho @ proj).real)
    return PairOutcomeDist.from_array(probs)


def planar_pair_probs(theta, werner_w, angle_a, angle_b):
    """Vectorised ``(p_pp, p_pm, p_mp, p_mm)`` for planar directions.

    All arguments broadcast against each other; the result is a tuple of four
    arrays of the broadcast shape.  Uses the correlators of ``|psi_theta>``:
    ``<Z x 1> = <1 x Z> = cos 2 theta``, ``<ZZ> = 1``, ``<XX> = sin 2 theta``.
    """
    theta, w, a, b = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (theta, werner_w, angle_a, angle_b))
    )
    c2 = np.cos(2 * theta)
    s2 = np.sin(2 * theta)
    m_a = w * c2 * np.cos(a)
    m_b = w * c2 * np.cos(b)
    corr = w * (np.cos(a) * np.cos(b) + s2 * np.sin(a) * np.sin(b))
    p_pp = (1 + m_a + m_b + corr) / 4
    p_pm = (1 + m_a - m_b - corr) / 4
    p_mp = (1 - m_a + m_b - corr) / 4
    p_mm = (1 - m_a - m_b + corr) / 4
    return tuple(np.clip(p, 0.0, 1.0) for p in (p_pp, p_pm, p_mp, p_mm))
