"""Piecewise-constant propagation of the blockaded two-atom system.

The laser amplitude is constant on every flat segment and follows a ramp on
the optional rise and fall edges. Ramps are staircased into
:data:`EDGE_SUBSTEPS` equal steps evaluated at their midpoints, and every
step is propagated exactly through an eigendecomposition of its Hamiltonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from clockgate.atom import BasisSet, Coupling, LaserConfig, coupling_table, enumerate_basis

EDGE_SUBSTEPS = 32
DEFAULT_SAMPLES = 512

EdgeShape = Literal["sine_squared", "linear"]


@dataclass(frozen=True)
class Edge:
    rise_duration: float
    fall_duration: float
    shape: EdgeShape = "sine_squared"
    phase_start: float = 0.0
    phase_end: float = 0.0

    def __post_init__(self) -> None:
        if self.shape not in ("sine_squared", "linear"):
            raise ValueError(f"unknown edge shape {self.shape!r}")
        if self.rise_duration < 0 or self.fall_duration < 0:
            raise ValueError("edge durations must be >= 0")


def ramp(x: np.ndarray | float, shape: EdgeShape) -> np.ndarray:
    """Rising amplitude profile on ``x`` in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if shape == "linear":
        return x
    return np.sin(0.5 * np.pi * x) ** 2


@dataclass(frozen=True)
class PhaseProfile:
    """Laser phase schedule with optional amplitude edges.

    ``durations`` and ``phases`` describe the flat-top segments, during
    which the amplitude is the full ``omega_max`` of the drive. ``scale``
    multiplies the amplitude everywhere; zero gives an idle pulse.
    """

    durations: np.ndarray
    phases: np.ndarray
    edge: Edge | None = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        d = np.asarray(self.durations, dtype=float).copy()
        p = np.asarray(self.phases, dtype=float).copy()
        if d.ndim != 1 or d.shape != p.shape or d.size == 0:
            raise ValueError("durations and phases must be equal-length 1-D sequences")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(p)) and math.isfinite(self.scale)):
            raise ValueError("profile values must be finite")
        if np.any(d <= 0):
            raise ValueError("segment durations must be > 0")
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "phases", p)

    @classmethod
    def uniform(cls, total: float, phases: Sequence[float], **kwargs) -> "PhaseProfile":
        phases = np.asarray(phases, dtype=float)
        return cls(np.full(phases.size, total / phases.size), phases, **kwargs)

    @property
    def flat_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def total_duration(self) -> float:
        t = self.flat_duration
        if self.edge is not None:
            t += self.edge.rise_duration + self.edge.fall_duration
        return t

    def with_phases(self, phases: np.ndarray) -> "PhaseProfile":
        return replace(self, phases=np.asarray(phases, dtype=float))

    def steps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Expand into ``(durations, phases, amplitude_scales)`` of constant steps."""
        dur = [self.durations]
        ph = [self.phases]
        amp = [np.ones_like(self.durations)]
        edge = self.edge
        if edge is not None:
            mid = (np.arange(EDGE_SUBSTEPS) + 0.5) / EDGE_SUBSTEPS
            if edge.rise_duration > 0:
                dur.insert(0, np.full(EDGE_SUBSTEPS, edge.rise_duration / EDGE_SUBSTEPS))
                ph.insert(0, np.full(EDGE_SUBSTEPS, edge.phase_start))
                amp.insert(0, ramp(mid, edge.shape))
            if edge.fall_duration > 0:
                dur.append(np.full(EDGE_SUBSTEPS, edge.fall_duration / EDGE_SUBSTEPS))
                ph.append(np.full(EDGE_SUBSTEPS, edge.phase_end))
                amp.append(ramp(1.0 - mid, edge.shape))
        return np.concatenate(dur), np.concatenate(ph), self.scale * np.concatenate(amp)

    def flat_slice(self) -> slice:
        """Positions of the flat segments inside :meth:`steps`."""
        start = EDGE_SUBSTEPS if self.edge is not None and self.edge.rise_duration > 0 else 0
        return slice(start, start + self.durations.size)

    def amplitude(self, t: np.ndarray | float) -> np.ndarray:
        """Amplitude scale (0..1 times ``scale``) of the staircased pulse at times ``t``."""
        dur, _, amp = self.steps()
        edges = np.concatenate([[0.0], np.cumsum(dur)])
        idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, dur.size - 1)
        return amp[idx]


@dataclass
class HamiltonianParts:
    """``H = diag + a * (exp(i phi) * raising + h.c.)`` on a basis."""

    diag: np.ndarray
    raising: np.ndarray

    def at(self, phase: float, amplitude_scale: float = 1.0) -> np.ndarray:
        off = amplitude_scale * np.exp(1j * phase) * self.raising
        return np.diag(self.diag).astype(complex) + off + off.conj().T

    @cached_property
    def blocks(self) -> list[np.ndarray]:
        """Index sets of the decoupled blocks of the coupling graph."""
        graph = (self.raising != 0) | (self.raising.T != 0)
        count, labels = connected_components(graph, directed=False)
        return [np.nonzero(labels == c)[0] for c in range(count)]

    def batch(self, phases: np.ndarray, scales: np.ndarray) -> np.ndarray:
        off = (scales * np.exp(1j * phases))[:, None, None] * self.raising
        return np.diag(self.diag).astype(complex)[None] + off + np.conj(np.swapaxes(off, 1, 2))


def hamiltonian_parts(basis: BasisSet, couplings: Sequence[Coupling]) -> HamiltonianParts:
    n = len(basis)
    present = basis.levels
    diag = np.zeros(n)
    raising = np.zeros((n, n))
    detunings: dict = {}
    for c in couplings:
        if c.ground not in present or c.rydberg not in present:
            raise ValueError(f"coupling {c.ground.value}->{c.rydberg.value} references a level absent from the basis")
        prev = detunings.setdefault(c.rydberg, c.detuning)
        if not math.isclose(prev, c.detuning, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"inconsistent detunings at {c.rydberg.value}")
    index = basis._lookup
    for i, (a, b) in enumerate(basis.states):
        for lv in (a, b):
            if lv.is_rydberg:
                diag[i] -= detunings.get(lv, 0.0)
    for c in couplings:
        for (a, b), i in index.items():
            # atom 1 excited, atom 2 spectator
            if a is c.ground and not b.is_rydberg:
                j = index.get((c.rydberg, b))
                if j is not None:
                    raising[j, i] += c.half_rabi
            if b is c.ground and not a.is_rydberg:
                j = index.get((a, c.rydberg))
                if j is not None:
                    raising[j, i] += c.half_rabi
    return HamiltonianParts(diag, raising)


def assemble_hamiltonian(
    basis: BasisSet, couplings: Sequence[Coupling], phase: float, amplitude_scale: float = 1.0
) -> np.ndarray:
    """Rotating-frame Hamiltonian for one laser phase and amplitude scale.

    Ground -> Rydberg matrix elements ``H[r, g]`` are
    ``amplitude_scale * half_rabi * exp(i phase)``.
    """
    return hamiltonian_parts(basis, couplings).at(phase, amplitude_scale)


def block_eigh(parts: HamiltonianParts, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``eigh`` done block by block; eigenvectors are exactly block diagonal."""
    w = np.empty(h.shape[:2])
    v = np.zeros_like(h)
    for idx in parts.blocks:
        wb, vb = np.linalg.eigh(h[:, idx[:, None], idx])
        w[:, idx] = wb
        v[:, idx[:, None], idx] = vb
    return w, v


def step_propagators(parts: HamiltonianParts, dur: np.ndarray, ph: np.ndarray, amp: np.ndarray) -> np.ndarray:
    """``exp(-i H_k dt_k)`` for every step."""
    h = parts.batch(ph, amp)
    out = np.zeros_like(h)
    for idx in parts.blocks:
        w, v = np.linalg.eigh(h[:, idx[:, None], idx])
        phase = np.exp(-1j * w * dur[:, None])
        out[:, idx[:, None], idx] = np.einsum("kij,kj,klj->kil", v, phase, v.conj())
    return out


def evolution_operator(profile: PhaseProfile, parts: HamiltonianParts) -> np.ndarray:
    u = np.eye(parts.diag.size, dtype=complex)
    for uk in step_propagators(parts, *profile.steps()):
        u = uk @ u
    return u


@dataclass
class Trajectory:
    """Sampled evolution for one input state.

    ``states[i]`` is the state at ``times[i]``.
    """

    input_index: int
    times: np.ndarray
    states: np.ndarray
    rydberg_population: np.ndarray = field(repr=False)


def propagate(
    profile: PhaseProfile,
    basis: BasisSet,
    couplings: Sequence[Coupling],
    sample_count: int = DEFAULT_SAMPLES,
) -> tuple[np.ndarray, list[Trajectory]]:
    """Evolve the whole basis and sample the four computational inputs.

    Returns the full evolution operator and one :class:`Trajectory` per
    computational input, sampled at ``sample_count`` uniform times covering
    ``[0, total_duration]``.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    parts = hamiltonian_parts(basis, couplings)
    dur, ph, amp = profile.steps()
    w, v = block_eigh(parts, parts.batch(ph, amp))

    n = len(basis)
    times = np.linspace(0.0, profile.total_duration, sample_count)
    starts = np.concatenate([[0.0], np.cumsum(dur)])
    # map every sample to the step containing it
    owner = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, dur.size - 1)

    u = np.eye(n, dtype=complex)
    samples = np.empty((sample_count, n, n), dtype=complex)
    for k in range(dur.size):
        sel = np.nonzero(owner == k)[0]
        if sel.size:
            tau = times[sel] - starts[k]
            partial = np.einsum("ij,sj,lj->sil", v[k], np.exp(-1j * w[k] * tau[:, None]), v[k].conj())
            samples[sel] = partial @ u
        u = (v[k] * np.exp(-1j * w[k] * dur[k])) @ v[k].conj().T @ u

    mask = basis.rydberg_mask
    trajectories = []
    for i in basis.computational_indices:
        states = samples[:, :, i]
        pop = np.sum(np.abs(states[:, mask]) ** 2, axis=1)
        trajectories.append(Trajectory(i, times, states, pop))
    return u, trajectories


def rydberg_time(trajectories: Sequence[Trajectory]) -> float:
    """Input-averaged time integral of the Rydberg population (trapezoid rule)."""
    if not trajectories:
        raise ValueError("no trajectories")
    grid = trajectories[0].times
    for tr in trajectories[1:]:
        if tr.times.shape != grid.shape or not np.array_equal(tr.times, grid):
            raise ValueError("trajectories are sampled on different grids")
    return float(np.mean([np.trapezoid(tr.rydberg_population, grid) for tr in trajectories]))


def mirrored(profile: PhaseProfile) -> PhaseProfile:
    """Profile with every phase negated, edges included.

    With ``delta_up = -delta_down`` this exchanges the roles of the up and down
    qubit states and leaves the gate fidelity unchanged.
    """
    edge = profile.edge
    if edge is not None:
        edge = replace(edge, phase_start=-edge.phase_start, phase_end=-edge.phase_end)
    return replace(profile, phases=-profile.phases, edge=edge)


def accumulated_phase(trajectory: Trajectory) -> float:
    """Unwrapped phase of the input-state amplitude at the final sample."""
    amp = trajectory.states[:, trajectory.input_index]
    return float(np.unwrap(np.angle(amp))[-1])


def orient_up_dominant(profile: PhaseProfile, laser: LaserConfig) -> PhaseProfile:
    """Pick, of ``profile`` and its mirror, the one in which |uu> accumulates
    the larger ground-state phase.

    The two are equally good gates, so this only fixes a labelling
    convention. It matters once sigma impurities break the up/down symmetry.
    """
    if not math.isclose(laser.delta_up, -laser.delta_down, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("mirror symmetry needs delta_up == -delta_down")
    _, trajectories = propagate(profile, enumerate_basis(False), coupling_table(laser))
    uu, dd = trajectories[0], trajectories[3]
    if abs(accumulated_phase(dd)) > abs(accumulated_phase(uu)):
        return mirrored(profile)
    return profile
