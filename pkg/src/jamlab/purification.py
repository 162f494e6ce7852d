"""BBPSSW recurrence under jamming: exact 16-dim round, analytic map, divergence run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .adversary import JammingSpec, jamming_state
from .errors import ExperimentError
from .qcore import PHI_PLUS, PHI_PLUS_DM, SEP_00_DM, SEP_11_DM, PostselectResult

ORACLE_ATOL = 1e-12
UNDERFLOW = 1e-300
MAX_ROUNDS = 64

CSV_COLUMNS = ("round", "x", "y", "z", "fidelity", "p_succ")


class DivergenceError(ExperimentError):
    """The exact simulation and the analytic recurrence disagree."""


@dataclass(frozen=True)
class RecurrenceCoords:
    """Populations of ``x Phi+ + y |00><00| + z |11><11|``."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not -1e-10 <= v <= 1.0 + 1e-10:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.x + self.y + self.z - 1.0) > 1e-10:
            raise ValueError(f"coordinates sum to {self.x + self.y + self.z}, expected 1")

    @classmethod
    def from_state(cls, rho: np.ndarray) -> "RecurrenceCoords":
        """Read coordinates off a state in the Phi+/|00>/|11> span."""
        rho = np.asarray(rho)
        x = 2.0 * rho[0, 3].real
        return cls(x, rho[0, 0].real - x / 2, rho[3, 3].real - x / 2)

    def to_state(self) -> np.ndarray:
        return self.x * PHI_PLUS_DM + self.y * SEP_00_DM + self.z * SEP_11_DM

    @property
    def fidelity(self) -> float:
        return (1.0 + self.x) / 2.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


# projector onto matching target parities, A1 B1 A2 B2 ordering
_P_SUCC = np.kron(np.eye(4), SEP_00_DM + SEP_11_DM)
_BCNOT = qcore.bilateral_cnot()


def bbpssw_exact_round(rho: np.ndarray) -> PostselectResult:
    """One BBPSSW round simulated on the full two-pair register.

    Returns the normalized source pair after both even-parity outcomes are
    accepted, together with the success probability.
    """
    rho = qcore.check_density(rho)
    if rho.shape != (4, 4):
        raise qcore.StateError("BBPSSW acts on two-qubit states")
    pair = qcore.tensor(rho, rho)
    pair = qcore.conjugate(pair, _BCNOT)
    branch = qcore.postselect(pair, _P_SUCC)
    if branch.empty:
        return PostselectResult(None, branch.probability)
    source = qcore.partial_trace(branch.state, [2, 2, 2, 2], keep=[0, 1])
    return PostselectResult(source / np.trace(source).real, branch.probability)


def recurrence_step(c: RecurrenceCoords) -> RecurrenceCoords:
    gain = 0.5 * c.x * (1.0 - c.x)
    x = c.x * c.x
    if x < UNDERFLOW:
        x = 0.0
    return RecurrenceCoords(x, c.y + gain, c.z + gain)


def jacobian(c: RecurrenceCoords) -> np.ndarray:
    """Jacobian of the (x, y) part of the recurrence."""
    return np.array([[2.0 * c.x, 0.0], [0.5 - c.x, 1.0]])


def jacobian_eigs(c: RecurrenceCoords) -> tuple[float, float]:
    # lower-triangular, so the eigenvalues are the diagonal
    j = jacobian(c)
    return float(j[0, 0]), float(j[1, 1])


@dataclass(frozen=True)
class RoundRecord:
    round: int
    coords: RecurrenceCoords
    fidelity: float
    p_succ: float

    def row(self) -> dict:
        return {"round": self.round, "x": self.coords.x, "y": self.coords.y,
                "z": self.coords.z, "fidelity": self.fidelity, "p_succ": self.p_succ}


@dataclass
class PurificationTrajectory:
    eta: float
    records: list[RoundRecord] = field(default_factory=list)
    max_oracle_gap: float = 0.0

    def rows(self) -> list[dict]:
        return [r.row() for r in self.records]

    @property
    def final(self) -> RoundRecord:
        return self.records[-1]


def closed_form_x(eta: float, m: int) -> float:
    """x_m = (1 - eta)^(2^m), evaluated without overflow in the exponent."""
    if eta == 0.0:
        return 1.0
    log_x = (2.0 ** m) * math.log1p(-eta) if eta < 1.0 else -math.inf
    return math.exp(log_x) if log_x > math.log(UNDERFLOW) else 0.0


def run_divergence(eta: float, rounds: int) -> PurificationTrajectory:
    """Iterate the exact round and the analytic map side by side.

    Raises
    ------
    DivergenceError
        If the two routes differ by more than 1e-12 in any coordinate, or the
        exact fidelity disagrees with ``(1 + x) / 2``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if not 0 <= rounds <= MAX_ROUNDS:
        raise ValueError(f"rounds must lie in [0, {MAX_ROUNDS}], got {rounds}")

    rho = jamming_state(JammingSpec(eta))
    coords = RecurrenceCoords(1.0 - eta, eta, 0.0)
    traj = PurificationTrajectory(eta)
    traj.records.append(RoundRecord(0, coords, coords.fidelity, 1.0))

    for m in range(1, rounds + 1):
        res = bbpssw_exact_round(rho)
        if res.empty:
            raise DivergenceError(f"round {m}: exact round rejected with certainty")
        rho = res.state
        coords = recurrence_step(coords)

        exact = RecurrenceCoords.from_state(rho)
        gap = float(np.max(np.abs(exact.as_array() - coords.as_array())))
        f_exact = qcore.fidelity_to_pure(rho, PHI_PLUS)
        gap = max(gap, abs(f_exact - coords.fidelity), abs(res.probability - 1.0))
        traj.max_oracle_gap = max(traj.max_oracle_gap, gap)
        if gap > ORACLE_ATOL:
            raise DivergenceError(
                f"round {m}: exact simulation and analytic map differ by {gap:.3e}"
            )
        traj.records.append(RoundRecord(m, coords, coords.fidelity, res.probability))
    return traj
