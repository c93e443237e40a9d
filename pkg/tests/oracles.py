"""Independent reference implementations used only by the tests.

Everything here is deliberately naive: explicit kets, labelled enumeration
of every per-pair outcome string, exact rational sums, Monte Carlo, and
first-quantized photon states.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

# ---------------------------------------------------------------- two qubits


def pair_ket(theta):
    return np.array([math.cos(theta), 0.0, 0.0, math.sin(theta)])


def plus_ket(angle):
    """Eigenvector of (sin a X + cos a Z) with eigenvalue +1."""
    return np.array([math.cos(angle / 2), math.sin(angle / 2)])


def minus_ket(angle):
    return np.array([-math.sin(angle / 2), math.cos(angle / 2)])


def trace_probs(theta, w, angle_a, angle_b):
    """(p_pp, p_pm, p_mp, p_mm) from explicit projectors and a 4x4 density matrix."""
    psi = pair_ket(theta)
    rho = w * np.outer(psi, psi) + (1 - w) * np.eye(4) / 4
    out = []
    for ka in (plus_ket(angle_a), minus_ket(angle_a)):
        for kb in (plus_ket(angle_b), minus_ket(angle_b)):
            v = np.kron(ka, kb)
            out.append(float(v @ rho @ v))
    return tuple(out)


# ---------------------------------------------------------------- labelled enumeration

OUTCOMES = ((1, 1), (1, 0), (0, 1), (0, 0))  # (Alice "+", Bob "+") per pair


def ceil_threshold(kind, m):
    if kind == "majority":
        return -(-m // 2)
    if kind == "unanimity":
        return m
    r = Fraction(kind)
    return math.ceil(r * m)


def enumerate_lossless(M, probs, kind_a, kind_b=None):
    """(P_A+, P_B+, P_++) summing over all 4^M labelled outcome strings."""
    kind_b = kind_b or kind_a
    pa = pb = pab = 0.0
    for labels in itertools.product(range(4), repeat=M):
        p = 1.0
        na = nb = 0
        for k in labels:
            p *= probs[k]
            na += OUTCOMES[k][0]
            nb += OUTCOMES[k][1]
        va = na >= ceil_threshold(kind_a, M)
        vb = nb >= ceil_threshold(kind_b, M)
        pa += p * va
        pb += p * vb
        pab += p * (va and vb)
    return pa, pb, pab


def category_probs(probs, eta):
    """Nine per-pair categories: (Alice symbol, Bob symbol, probability) with symbols +,-,0."""
    p_pp, p_pm, p_mp, p_mm = probs
    pa, pb = p_pp + p_pm, p_pp + p_mp
    return [
        ("+", "+", eta * eta * p_pp), ("+", "-", eta * eta * p_pm),
        ("-", "+", eta * eta * p_mp), ("-", "-", eta * eta * p_mm),
        ("+", "0", eta * (1 - eta) * pa), ("-", "0", eta * (1 - eta) * (1 - pa)),
        ("0", "+", eta * (1 - eta) * pb), ("0", "-", eta * (1 - eta) * (1 - pb)),
        ("0", "0", (1 - eta) ** 2),
    ]


def enumerate_efficiency_counts(M, probs, eta):
    """Dict (a+, a-, b+, b-) -> probability over all 9^M labelled category strings."""
    cats = category_probs(probs, eta)
    out = {}
    for labels in itertools.product(range(9), repeat=M):
        p = 1.0
        c = [0, 0, 0, 0]
        for k in labels:
            sa, sb, q = cats[k]
            p *= q
            c[0] += sa == "+"
            c[1] += sa == "-"
            c[2] += sb == "+"
            c[3] += sb == "-"
        out[tuple(c)] = out.get(tuple(c), 0.0) + p
    return out


def enumerate_efficiency_votes(M, probs, eta, kind, empty_plus=False):
    """Vote-level (P_A+, P_B+, P_++) with per-party thresholds on detected totals."""
    pa = pb = pab = 0.0
    for (ap, am, bp, bm), p in enumerate_efficiency_counts(M, probs, eta).items():
        ma, mb = ap + am, bp + bm
        va = (ap >= ceil_threshold(kind, ma)) if ma else empty_plus
        vb = (bp >= ceil_threshold(kind, mb)) if mb else empty_plus
        pa += p * va
        pb += p * vb
        pab += p * (va and vb)
    return pa, pb, pab


def enumerate_one_loss(M, probs):
    """Dict (a+, b+) -> probability: every labelled outcome string and every lost pair per side."""
    out = {}
    for labels in itertools.product(range(4), repeat=M):
        p = 1.0
        for k in labels:
            p *= probs[k]
        for i in range(M):
            for j in range(M):
                a = sum(OUTCOMES[labels[t]][0] for t in range(M) if t != i)
                b = sum(OUTCOMES[labels[t]][1] for t in range(M) if t != j)
                out[(a, b)] = out.get((a, b), 0.0) + p / (M * M)
    return out


def monte_carlo_one_loss(M, probs, samples, rng):
    """Sampled (a+, b+) after removing one uniformly random particle per side."""
    labels = rng.choice(4, size=(samples, M), p=np.asarray(probs) / np.sum(probs))
    alice = np.array([o[0] for o in OUTCOMES])[labels]
    bob = np.array([o[1] for o in OUTCOMES])[labels]
    rows = np.arange(samples)
    i = rng.integers(M, size=samples)
    j = rng.integers(M, size=samples)
    return alice.sum(axis=1) - alice[rows, i], bob.sum(axis=1) - bob[rows, j]


def exact_binomial_tail(M, p: Fraction, N):
    return sum(math.comb(M, n) * p**n * (1 - p) ** (M - n) for n in range(N, M + 1))


def deterministic_strategies():
    """All local deterministic single-pair strategies: (A1, A2, B1, B2) outcomes in {0, 1}."""
    return list(itertools.product((0, 1), repeat=4))


# ---------------------------------------------------------------- spin j


def wigner_small_d(j2, beta):
    """Closed-form Wigner d^j_{m'm}(beta) (Wigner's sum), rows/cols ordered m = -j..j."""
    j = j2 / 2
    ms = [-j + k for k in range(j2 + 1)]
    d = np.zeros((j2 + 1, j2 + 1))
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    for a, mp in enumerate(ms):
        for b, m in enumerate(ms):
            pre = math.sqrt(math.factorial(round(j + mp)) * math.factorial(round(j - mp))
                            * math.factorial(round(j + m)) * math.factorial(round(j - m)))
            total = 0.0
            for k in range(0, j2 + 1):
                e1, e2, e3, e4 = round(j + m - k), k, round(j - k - mp), round(mp - m + k)
                if min(e1, e2, e3, e4) < 0:
                    continue
                total += (-1) ** e4 * c ** round(2 * j + m - mp - 2 * k) * s ** round(mp - m + 2 * k) / (
                    math.factorial(e1) * math.factorial(e2) * math.factorial(e3) * math.factorial(e4))
            d[a, b] = pre * total
    return d


# ---------------------------------------------------------------- first quantization


def symmetrizer(n):
    """Projector onto the symmetric subspace of n qubits."""
    dim = 2**n
    P = np.zeros((dim, dim))
    for perm in itertools.permutations(range(n)):
        for idx in range(dim):
            bits = [(idx >> (n - 1 - q)) & 1 for q in range(n)]
            new = [bits[perm[q]] for q in range(n)]
            P[sum(b << (n - 1 - q) for q, b in enumerate(new)), idx] += 1
    return P / math.factorial(n)


def dicke_basis(n):
    """Columns: normalised symmetric states with k qubits in |0> (k = 0..n)."""
    dim = 2**n
    cols = []
    for k in range(n + 1):
        v = np.zeros(dim)
        for idx in range(dim):
            zeros = n - bin(idx).count("1")
            if zeros == k:
                v[idx] = 1.0
        cols.append(v / np.linalg.norm(v))
    return np.array(cols).T


def first_quantized_one_loss(M):
    """Density matrix in the (k_A, k_B) Dicke basis after tracing one qubit per side.

    Qubit |0> is a photon in mode 0; the symmetric state of M photon pairs is
    the symmetrised product of M Bell pairs, projected on both sides.
    """
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2)
    psi = bell
    for _ in range(M - 1):
        psi = np.kron(psi, bell)
    # reorder qubits from (a1 b1 a2 b2 ...) to (a1..aM b1..bM)
    psi = psi.reshape([2] * (2 * M)).transpose(list(range(0, 2 * M, 2)) + list(range(1, 2 * M, 2))).reshape(-1)
    S = symmetrizer(M)
    psi = np.kron(S, S) @ psi
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi).reshape([2] * (4 * M))
    # trace the last qubit of Alice (index M-1) and of Bob (index 2M-1)
    n = 2 * M
    rho = np.trace(rho, axis1=M - 1, axis2=n + M - 1)
    n -= 1
    rho = np.trace(rho, axis1=n - 1, axis2=2 * n - 1)
    dim = 2 ** (M - 1)
    rho = rho.reshape(dim * dim, dim * dim)
    D = dicke_basis(M - 1)
    DD = np.kron(D, D)
    return DD.T @ rho @ DD


# ---------------------------------------------------------------- pairing-forgotten entanglement


def _pauli_sum(n, op, site_offset, total):
    out = np.zeros((2**total, 2**total), dtype=complex)
    for q in range(n):
        mats = [np.eye(2)] * total
        mats[site_offset + q] = op
        term = mats[0]
        for m in mats[1:]:
            term = np.kron(term, m)
        out += term
    return out / 2


def _entropy(rho):
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 1e-13]
    return float(-np.sum(lam * np.log2(lam)))


def pairing_forgotten_entanglement(M):
    """Average over Alice's qubit permutations, split into total-spin sectors, and
    sum the per-sector entanglement I(A:B)/2 weighted by the sector probability."""
    n = 2 * M
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2)
    psi = bell
    for _ in range(M - 1):
        psi = np.kron(psi, bell)
    psi = psi.reshape([2] * n).transpose(list(range(0, n, 2)) + list(range(1, n, 2))).reshape(-1)
    rho = np.zeros((2**n, 2**n))
    perms = list(itertools.permutations(range(M)))
    for perm in perms:
        order = list(perm) + list(range(M, n))
        v = psi.reshape([2] * n).transpose(order).reshape(-1)
        rho += np.outer(v, v)
    rho /= len(perms)
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1.0, -1.0])
    J2 = sum(_pauli_sum(M, s, 0, n) @ _pauli_sum(M, s, 0, n) for s in (sx, sy, sz))
    lam, vecs = np.linalg.eigh(J2)
    total = 0.0
    for j in np.arange(0, M / 2 + 1):
        sel = np.abs(lam - j * (j + 1)) < 1e-8
        if not sel.any():
            continue
        proj = vecs[:, sel] @ vecs[:, sel].conj().T
        block = proj @ rho @ proj
        p = float(np.real(np.trace(block)))
        if p < 1e-14:
            continue
        block = block / p
        t = block.reshape(2**M, 2**M, 2**M, 2**M)
        rho_a = np.einsum("ijkj->ik", t)
        rho_b = np.einsum("ijil->jl", t)
        mutual = _entropy(rho_a) + _entropy(rho_b) - _entropy(block)
        total += p * mutual / 2
    return total
