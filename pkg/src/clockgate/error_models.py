"""Rydberg-decay error estimate and the polarization-impurity fidelity surface."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from clockgate.atom import LaserConfig, PolarizationImpurity, coupling_table, enumerate_basis
from clockgate.dynamics import PhaseProfile, Trajectory, evolution_operator, hamiltonian_parts, rydberg_time
from clockgate.fidelity import extract_gate_matrix, gauge_fix


@dataclass
class DecayEstimate:
    """First-order decay error ``rydberg_time / tau``.

    Both times share one unit (seconds at the CLI boundary, ``1/Omega``
    inside the library).
    """

    rydberg_time: float
    tau: float

    @property
    def error(self) -> float:
        return self.rydberg_time / self.tau

    def to_dict(self) -> dict:
        return {"rydberg_time": self.rydberg_time, "tau": self.tau, "error": self.error}


def decay_error(trajectories: Sequence[Trajectory], tau: float, omega_max: float = 1.0) -> DecayEstimate:
    """Decay error for lifetime ``tau``.

    The trajectories are dimensionless (time in ``1/Omega``); ``omega_max``
    in rad per unit of ``tau`` converts their Rydberg time into those units.
    """
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return DecayEstimate(rydberg_time(trajectories) / omega_max, tau)


def closed_form_decay_error(ratio: float, delta_z: float, tau: float) -> float:
    """Error for a Rydberg time of exactly ``2 pi / Omega``: ``2 pi ratio / (tau delta_z)``.

    At ``ratio = 0.8`` this is ``1.6 pi / (tau delta_z)``.
    """
    return 2.0 * math.pi * ratio / (tau * delta_z)


def impurity_fidelity(profile: PhaseProfile, laser: LaserConfig, impurity: PolarizationImpurity) -> float:
    """Gauge-fixed fidelity of a fixed pulse on the 20-state impurity basis."""
    basis = enumerate_basis(True)
    parts = hamiltonian_parts(basis, coupling_table(laser, impurity))
    u = evolution_operator(profile, parts)
    return gauge_fix(extract_gate_matrix(u, basis)).fidelity


@dataclass
class ImpurityScanResult:
    varsigma0: np.ndarray
    varsigma: np.ndarray
    fidelity: np.ndarray  # rows follow varsigma0, columns follow varsigma
    pulse_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> list[tuple[float, float, float]]:
        return [
            (float(s0), float(s), float(self.fidelity[i, j]))
            for i, s0 in enumerate(self.varsigma0)
            for j, s in enumerate(self.varsigma)
        ]

    def min_fidelity(self, varsigma0_max: float) -> float:
        rows = self.varsigma0 <= varsigma0_max * (1 + 1e-12)
        if not rows.any():
            raise ValueError(f"no grid rows with varsigma0 <= {varsigma0_max}")
        return float(self.fidelity[rows].min())


def _scan_row(args) -> list[float]:
    profile, laser, s0, varsigmas = args
    return [impurity_fidelity(profile, laser, PolarizationImpurity(s0, s)) for s in varsigmas]


def default_grid(points: int = 25) -> tuple[np.ndarray, np.ndarray]:
    return np.logspace(-4, -2, points), np.logspace(-1, 1, points)


def impurity_scan(
    profile: PhaseProfile,
    laser: LaserConfig,
    varsigma0_range: Sequence[float],
    varsigma_range: Sequence[float],
    workers: int = 1,
    pulse_id: str = "",
) -> ImpurityScanResult:
    """Fidelity on the full (varsigma0 x varsigma) grid, gathered in grid order."""
    s0s = np.asarray(varsigma0_range, dtype=float)
    ss = np.asarray(varsigma_range, dtype=float)
    if s0s.size == 0 or ss.size == 0:
        raise ValueError("scan ranges must be non-empty")
    tasks = [(profile, laser, float(s0), ss) for s0 in s0s]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_scan_row, tasks))
    else:
        rows = [_scan_row(t) for t in tasks]
    return ImpurityScanResult(s0s, ss, np.array(rows), pulse_id)
