"""Gate-matrix extraction, leakage-aware fidelity and single-qubit phase gauge.

The target is the CZ-like map

    |uu> -> e^{ia}|uu>,  |ud>,|du> -> e^{i(a+b)/2}|ud>,|du>,  |dd> -> -e^{ib}|dd>

which local Z rotations turn into ``CZ = diag(1, 1, 1, -1)``. Up to a global
phase, which the fidelity ignores, the local correction
``diag(e^{-ia}, e^{-i(a+b)/2}, e^{-i(a+b)/2}, e^{-ib})`` depends only on
``theta = (b - a) / 2``. :func:`gauge_fix` therefore optimizes a single angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from clockgate.atom import BasisSet

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def extract_gate_matrix(u_full: np.ndarray, basis: BasisSet) -> np.ndarray:
    idx = np.asarray(basis.computational_indices)
    return np.asarray(u_full)[np.ix_(idx, idx)]


def pedersen_fidelity(m: np.ndarray, u_target: np.ndarray = CZ) -> float:
    """Average gate fidelity of a possibly leaky 4x4 block ``m``.

    ``F = (|Tr(U^dag M)|^2 + Tr(U^dag M M^dag U)) / 20``.
    """
    u_target = np.asarray(u_target, dtype=complex)
    d = u_target.shape[0]
    if np.max(np.abs(u_target.conj().T @ u_target - np.eye(d))) > 1e-10:
        raise ValueError("target is not unitary")
    ov = np.trace(u_target.conj().T @ m)
    second = np.trace(u_target.conj().T @ m @ m.conj().T @ u_target)
    if abs(second.imag) > 1e-12 * max(1.0, abs(second.real)):
        raise ArithmeticError(f"trace term has imaginary residue {second.imag:g}")
    return float((abs(ov) ** 2 + second.real) / (d * (d + 1)))


def gauge_matrix(alpha: float, beta: float) -> np.ndarray:
    """Local phase correction D(alpha, beta) applied on the left of M."""
    mid = np.exp(-0.5j * (alpha + beta))
    return np.diag([np.exp(-1j * alpha), mid, mid, np.exp(-1j * beta)])


def gauge_overlap(m: np.ndarray, theta: float | np.ndarray) -> complex | np.ndarray:
    """``Tr(CZ D M)`` for the reduced gauge angle ``theta`` (global phase dropped)."""
    z = np.exp(-1j * np.asarray(theta))
    return m[0, 0] + z * (m[1, 1] + m[2, 2]) - z**2 * m[3, 3]


@dataclass
class GateResult:
    m_matrix: np.ndarray
    alpha: float
    beta: float
    epsilon: float
    a: float
    b: float
    c: float
    fidelity: float

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    @property
    def offdiag_max(self) -> float:
        off = self.m_matrix - np.diag(np.diag(self.m_matrix))
        return float(np.max(np.abs(off)))

    def to_dict(self) -> dict:
        return {
            "m_matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.m_matrix],
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "fidelity": self.fidelity,
            "infidelity": self.infidelity,
            "offdiag_max": self.offdiag_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GateResult":
        m = np.array([[complex(re, im) for re, im in row] for row in data["m_matrix"]])
        keys = ("alpha", "beta", "epsilon", "a", "b", "c", "fidelity")
        return cls(m, *(float(data[k]) for k in keys))


def best_gauge_angle(m: np.ndarray, grid: int = 64) -> float:
    """Angle theta maximizing ``|Tr(CZ D M)|``.

    The seed ``(arg(-m44) - arg(m11)) / 2`` is exact for the ideal gate
    pattern; a coarse grid covers degenerate cases, and the best candidate
    is polished with a bounded Brent search.
    """
    def neg(t):
        return -abs(gauge_overlap(m, t)) ** 2

    thetas = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    values = np.abs(gauge_overlap(m, thetas)) ** 2
    candidates = [float(thetas[np.argmax(values)])]
    if abs(m[0, 0]) > 0 and abs(m[3, 3]) > 0:
        candidates.append(0.5 * (np.angle(-m[3, 3]) - np.angle(m[0, 0])))
    step = 2 * np.pi / grid
    best_t, best_v = candidates[0], neg(candidates[0])
    for c in candidates:
        res = minimize_scalar(neg, bounds=(c - step, c + step), method="bounded", options={"xatol": 1e-13})
        for t, v in ((c, neg(c)), (float(res.x), float(res.fun))):
            if v < best_v:
                best_t, best_v = t, v
    return _newton_polish(m, best_t)


def _newton_polish(m: np.ndarray, theta: float, steps: int = 4) -> float:
    # Brent stalls at ~sqrt(eps) in the angle; Newton on d|t|^2/dtheta does not
    s, m44 = m[1, 1] + m[2, 2], m[3, 3]
    for _ in range(steps):
        z = np.exp(-1j * theta)
        t = gauge_overlap(m, theta)
        d1 = -1j * z * s + 2j * z**2 * m44
        d2 = -z * s + 4 * z**2 * m44
        f1 = 2 * (np.conj(t) * d1).real
        f2 = 2 * (abs(d1) ** 2 + (np.conj(t) * d2).real)
        if f2 >= 0 or abs(f1) < 1e-300:
            break
        theta -= f1 / f2
    return float(theta)


def gauge_fix(m: np.ndarray) -> GateResult:
    """Best single-qubit phase gauge for ``m`` and the resulting fidelity.

    ``alpha`` is pinned to ``arg(m11)`` (the global-phase freedom) and
    ``beta = alpha + 2 theta``.
    """
    m = np.asarray(m, dtype=complex)
    theta = best_gauge_angle(m)
    alpha = float(np.angle(m[0, 0])) if abs(m[0, 0]) > 0 else 0.0
    beta = alpha + 2.0 * theta
    fid = pedersen_fidelity(gauge_matrix(alpha, beta) @ m, CZ)
    epsilon = float(np.angle(-np.exp(-1j * beta) * m[3, 3])) if abs(m[3, 3]) > 0 else 0.0
    # shift alpha and beta together by 2pi so that (alpha + beta) / 2 keeps its branch
    shift = 2 * math.pi * math.floor(alpha / (2 * math.pi))
    alpha, beta = alpha - shift, (beta - shift) % (4 * math.pi)
    return GateResult(
        m_matrix=m,
        alpha=alpha,
        beta=beta,
        epsilon=epsilon,
        a=float(abs(m[0, 0])),
        b=float(math.sqrt(abs(m[1, 1] * m[2, 2]))),
        c=float(abs(m[3, 3])),
        fidelity=min(1.0, max(0.0, fid)),
    )
