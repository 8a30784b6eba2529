"""Level structure, laser parameters and the blockade-truncated two-atom basis.

Each atom carries a nuclear-spin qubit in the clock state (``g_up``,
``g_down``, m_F = +-1/2) and four Rydberg sublevels of an F' = 3/2 manifold
(``r_up``, ``r_down`` at m_F = +-1/2 and ``r_plus``, ``r_minus`` at
m_F = +-3/2). A single linearly polarized laser drives the two pi lines;
impure polarization adds sigma+ and sigma- lines.

Units are dimensionless: the peak pi Rabi frequency is 1 and time is measured
in units of its inverse. Physical units appear only in :mod:`clockgate.cli`.

Sign convention: a Rydberg level reached with detuning ``delta`` carries
``-delta`` on its diagonal of the rotating-frame Hamiltonian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

#: Zeeman splitting of the two clock-Rydberg transitions, in Hz per gauss.
ZEEMAN_HZ_PER_GAUSS = 1.9e6


class Level(enum.Enum):
    G_UP = "g_up"
    G_DOWN = "g_down"
    R_UP = "r_up"
    R_DOWN = "r_down"
    R_PLUS = "r_plus"
    R_MINUS = "r_minus"

    @property
    def m_f(self) -> Fraction:
        return _M_F[self]

    @property
    def is_rydberg(self) -> bool:
        return self not in (Level.G_UP, Level.G_DOWN)


_M_F = {
    Level.G_UP: Fraction(1, 2),
    Level.G_DOWN: Fraction(-1, 2),
    Level.R_UP: Fraction(1, 2),
    Level.R_DOWN: Fraction(-1, 2),
    Level.R_PLUS: Fraction(3, 2),
    Level.R_MINUS: Fraction(-3, 2),
}

GROUND_LEVELS = (Level.G_UP, Level.G_DOWN)
PI_RYDBERG_LEVELS = (Level.R_UP, Level.R_DOWN)
ALL_RYDBERG_LEVELS = (Level.R_UP, Level.R_DOWN, Level.R_PLUS, Level.R_MINUS)


class Polarization(enum.Enum):
    PI = 0
    SIGMA_PLUS = 1
    SIGMA_MINUS = -1

    @property
    def q(self) -> int:
        return self.value


@dataclass(frozen=True)
class MagneticField:
    b_gauss: float

    def __post_init__(self) -> None:
        if not self.b_gauss >= 0:
            raise ValueError(f"b_gauss must be >= 0, got {self.b_gauss}")


def zeeman_splitting(b: MagneticField) -> float:
    """Return the splitting Delta_Z in rad/s for a bias field ``b``."""
    return 2.0 * math.pi * ZEEMAN_HZ_PER_GAUSS * b.b_gauss


@dataclass(frozen=True)
class LaserConfig:
    """Scalar parameters of the drive.

    ``delta_up`` and ``delta_down`` are the laser detunings at ``r_up`` and
    ``r_down``; ``delta_z`` is always ``|delta_up - delta_down|``. Use
    :meth:`from_ratio` for the symmetric split ``delta_down = -delta_up``.
    """

    omega_max: float
    delta_up: float
    delta_down: float

    def __post_init__(self) -> None:
        if not self.omega_max > 0:
            raise ValueError(f"omega_max must be > 0, got {self.omega_max}")
        if not (math.isfinite(self.delta_up) and math.isfinite(self.delta_down)):
            raise ValueError("detunings must be finite")

    @property
    def delta_z(self) -> float:
        return abs(self.delta_up - self.delta_down)

    @classmethod
    def from_ratio(cls, ratio: float, omega_max: float = 1.0, split: float = 0.5) -> "LaserConfig":
        """Build a drive with ``delta_z = ratio * omega_max``.

        ``split`` places the laser between the two lines:
        ``delta_down = split * delta_z`` and ``delta_up = (split - 1) * delta_z``.
        The default 0.5 gives ``delta_down = -delta_up = delta_z / 2``.
        """
        if ratio < 0:
            raise ValueError(f"ratio must be >= 0, got {ratio}")
        delta_z = ratio * omega_max
        return cls(omega_max, (split - 1.0) * delta_z, split * delta_z)

    def scaled(self, s: float) -> "LaserConfig":
        return LaserConfig(s * self.omega_max, s * self.delta_up, s * self.delta_down)

    def rydberg_detuning(self, level: Level) -> float:
        """Laser detuning at a Rydberg sublevel.

        The Rydberg Zeeman shift is linear in m_F, so ``r_plus`` sits one
        ``delta_z`` step beyond ``r_up`` and ``r_minus`` one step beyond
        ``r_down``.
        """
        step = self.delta_up - self.delta_down
        if level is Level.R_UP:
            return self.delta_up
        if level is Level.R_DOWN:
            return self.delta_down
        if level is Level.R_PLUS:
            return self.delta_up + step
        if level is Level.R_MINUS:
            return self.delta_down - step
        raise ValueError(f"{level} is not a Rydberg level")


@dataclass(frozen=True)
class PolarizationImpurity:
    """Wrong-polarization content of the laser.

    ``varsigma0`` is the intensity of the wrong field relative to the pi
    field; ``varsigma`` is the sigma+ to sigma- intensity ratio.
    """

    varsigma0: float
    varsigma: float = 1.0

    def __post_init__(self) -> None:
        if not self.varsigma0 >= 0:
            raise ValueError(f"varsigma0 must be >= 0, got {self.varsigma0}")
        if not self.varsigma > 0:
            raise ValueError(f"varsigma must be > 0, got {self.varsigma}")

    @property
    def power_fractions(self) -> dict[Polarization, float]:
        s0, s = self.varsigma0, self.varsigma
        return {
            Polarization.PI: 1.0,
            Polarization.SIGMA_PLUS: s0 * s / (1.0 + s),
            Polarization.SIGMA_MINUS: s0 / (1.0 + s),
        }


class Coupling(NamedTuple):
    ground: Level
    rydberg: Level
    polarization: Polarization
    half_rabi: float
    detuning: float


def clebsch_gordan(j1: Fraction, m1: Fraction, j2: Fraction, m2: Fraction, j: Fraction, m: Fraction) -> float:
    """<j1 m1; j2 m2 | j m> from the Racah closed form."""
    j1, m1, j2, m2, j, m = (Fraction(x) for x in (j1, m1, j2, m2, j, m))
    if m1 + m2 != m or abs(m1) > j1 or abs(m2) > j2 or abs(m) > j:
        return 0.0
    if not (abs(j1 - j2) <= j <= j1 + j2):
        return 0.0

    def fact(x: Fraction) -> int:
        if x.denominator != 1 or x < 0:
            raise ValueError(f"non-integer factorial argument {x}")
        return math.factorial(int(x))

    pref = Fraction(
        (2 * j + 1) * fact(j1 + j2 - j) * fact(j1 - j2 + j) * fact(-j1 + j2 + j),
        fact(j1 + j2 + j + 1),
    )
    pref *= fact(j1 + m1) * fact(j1 - m1) * fact(j2 + m2) * fact(j2 - m2) * fact(j + m) * fact(j - m)
    total = Fraction(0)
    k = 0
    while True:
        args = (
            j1 + j2 - j - k,
            j1 - m1 - k,
            j2 + m2 - k,
            j - j2 + m1 + k,
            j - j1 - m2 + k,
        )
        if min(args[:3]) < 0:
            break
        if min(args[3:]) >= 0:
            denom = math.factorial(k)
            for a in args:
                denom *= fact(a)
            total += Fraction((-1) ** k, denom)
        k += 1
    sign = 1 if total >= 0 else -1
    return sign * math.sqrt(pref) * abs(float(total))


#: Hyperfine quantum numbers of the clock state and the Rydberg manifold.
F_GROUND = Fraction(1, 2)
F_RYDBERG = Fraction(3, 2)


def transition_cg(ground: Level, polarization: Polarization) -> float:
    """Clebsch-Gordan factor for ground -> F'=3/2 with photon helicity q."""
    m = ground.m_f
    q = Fraction(polarization.q)
    return clebsch_gordan(F_GROUND, m, Fraction(1), q, F_RYDBERG, m + q)


def _target_level(ground: Level, polarization: Polarization) -> Level:
    m = ground.m_f + polarization.q
    for level in ALL_RYDBERG_LEVELS:
        if level.m_f == m:
            return level
    raise ValueError(f"no Rydberg level with m_F={m}")


def coupling_table(laser: LaserConfig, impurity: PolarizationImpurity | None = None) -> list[Coupling]:
    """List the driven ground -> Rydberg lines.

    The pi lines carry ``omega_max / 2``; this absorbs their common
    Clebsch-Gordan factor. A sigma line carries
    ``omega_max / 2 * sqrt(p_q) * C_q / C_pi`` with ``p_q`` its power fraction.
    """
    half = laser.omega_max / 2.0
    table = []
    for g in GROUND_LEVELS:
        r = _target_level(g, Polarization.PI)
        table.append(Coupling(g, r, Polarization.PI, half, laser.rydberg_detuning(r)))
    if impurity is None:
        return table
    fractions = impurity.power_fractions
    for g in GROUND_LEVELS:
        c_pi = transition_cg(g, Polarization.PI)
        for pol in (Polarization.SIGMA_PLUS, Polarization.SIGMA_MINUS):
            r = _target_level(g, pol)
            amp = half * math.sqrt(fractions[pol]) * transition_cg(g, pol) / c_pi
            table.append(Coupling(g, r, pol, amp, laser.rydberg_detuning(r)))
    return table


@dataclass(frozen=True)
class BasisSet:
    """Two-atom product states with at most one Rydberg excitation.

    Ordering: the four ground-ground states first, in the order
    (up,up), (up,down), (down,up), (down,down); then states with atom 1
    excited, Rydberg level outer and atom-2 spin inner; then the same with
    atom 2 excited.
    """

    states: tuple[tuple[Level, Level], ...]
    computational_indices: tuple[int, int, int, int] = field(default=(0, 1, 2, 3))

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state: tuple[Level, Level]) -> int:
        return self._lookup[state]

    @property
    def _lookup(self) -> dict[tuple[Level, Level], int]:
        return {s: i for i, s in enumerate(self.states)}

    @property
    def rydberg_mask(self) -> np.ndarray:
        return np.array([a.is_rydberg or b.is_rydberg for a, b in self.states])

    @property
    def levels(self) -> frozenset[Level]:
        return frozenset(lv for s in self.states for lv in s)


def enumerate_basis(impurity_enabled: bool = False) -> BasisSet:
    rydberg = ALL_RYDBERG_LEVELS if impurity_enabled else PI_RYDBERG_LEVELS
    states = [(a, b) for a in GROUND_LEVELS for b in GROUND_LEVELS]
    states += [(r, g) for r in rydberg for g in GROUND_LEVELS]
    states += [(g, r) for r in rydberg for g in GROUND_LEVELS]
    return BasisSet(tuple(states), (0, 1, 2, 3))
