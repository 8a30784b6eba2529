"""Phase-modulated CZ-like gates on clock-state nuclear-spin qubits under perfect Rydberg blockade."""

from clockgate.atom import (
    BasisSet,
    Coupling,
    LaserConfig,
    Level,
    MagneticField,
    Polarization,
    PolarizationImpurity,
    coupling_table,
    enumerate_basis,
    zeeman_splitting,
)
from clockgate.dynamics import (
    Edge,
    PhaseProfile,
    Trajectory,
    assemble_hamiltonian,
    mirrored,
    orient_up_dominant,
    propagate,
    rydberg_time,
)
from clockgate.error_models import DecayEstimate, ImpurityScanResult, decay_error, impurity_fidelity, impurity_scan
from clockgate.fidelity import CZ, GateResult, extract_gate_matrix, gauge_fix, pedersen_fidelity
from clockgate.optimizer import (
    OptimizationReport,
    OptimizationSpec,
    add_edges,
    edged_gate,
    fixed_duration_scan,
    grape_optimize,
    min_duration,
)

__version__ = "0.1.0"
