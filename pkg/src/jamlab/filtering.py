"""Generalized local filtering driven by marginal tomography, and its stagnation."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .errors import ExperimentError
from .qcore import PHI_PLUS

EPS_DEG = 1e-9
FILTER_FLOOR = 1e-8
STAGNATION_ATOL = 1e-12
MAX_ROUNDS = 64

CSV_COLUMNS = ("round", "p_succ", "fidelity", "lambda0_A", "lambda0_B", "stagnated")


class Side(enum.Enum):
    ALICE_ONLY = "alice"
    BOTH = "both"


class PureMarginalWarning(UserWarning):
    """A marginal was (numerically) pure; the filter was clamped to the floor."""


class FilteringError(ExperimentError):
    pass


@dataclass(frozen=True)
class FilterPair:
    """Diagonal filter ``diag(f0, f1)`` in the eigenbasis ``basis`` of a marginal.

    ``basis`` is the unitary V with ``V rho_A V^dagger`` diagonal, so the
    applied operator is ``V^dagger diag(f0, f1) V``.
    """

    f0: float
    f1: float
    basis: np.ndarray

    @property
    def is_identity(self) -> bool:
        return self.f0 == 1.0 and self.f1 == 1.0

    def operator(self) -> np.ndarray:
        if self.is_identity:
            return np.eye(2, dtype=complex)
        v = self.basis
        return v.conj().T @ np.diag([self.f0, self.f1]).astype(complex) @ v


def filter_params(lambda0: float, lambda1: float, eps_deg: float = EPS_DEG) -> tuple[float, float]:
    """Filter strengths that balance a marginal with eigenvalues ``lambda0 >= lambda1``."""
    if lambda0 < lambda1 - 1e-12 or lambda1 < -1e-12:
        raise ValueError(f"expected lambda0 >= lambda1 >= 0, got ({lambda0}, {lambda1})")
    if abs(lambda0 + lambda1 - 1.0) > 1e-10:
        raise ValueError(f"eigenvalues sum to {lambda0 + lambda1}, expected 1")
    if abs(lambda0 - lambda1) < eps_deg:
        return 1.0, 1.0
    if lambda1 <= FILTER_FLOOR ** 2:
        warnings.warn("pure marginal: filter clamped to floor", PureMarginalWarning, stacklevel=2)
        return FILTER_FLOOR, 1.0
    f0 = min(1.0, np.sqrt(lambda1 / lambda0))
    f1 = min(1.0, np.sqrt(lambda0 / lambda1))
    return max(float(f0), FILTER_FLOOR), float(f1)


def _side_filter(marginal: np.ndarray, eps_deg: float) -> tuple[FilterPair, np.ndarray]:
    lam, w = qcore.eigh(marginal)
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    f0, f1 = filter_params(float(lam[0]), float(lam[1]), eps_deg)
    return FilterPair(f0, f1, w.conj().T), lam


@dataclass(frozen=True)
class FilterRoundResult:
    state: np.ndarray
    p_succ: float
    filters: tuple[FilterPair, FilterPair | None]
    marginal_eigs: tuple[np.ndarray, np.ndarray]


def _marginals(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (qcore.partial_trace(rho, [2, 2], keep=[0]),
            qcore.partial_trace(rho, [2, 2], keep=[1]))


def filter_round(rho: np.ndarray, side: Side = Side.ALICE_ONLY, eps_deg: float = EPS_DEG,
                 marginal_noise: float = 0.0,
                 rng: np.random.Generator | None = None) -> FilterRoundResult:
    """One round of local filtering on a two-qubit state.

    ``marginal_noise`` perturbs the tomographic marginal estimates by a random
    Hermitian, traceless matrix of that spectral norm, modelling a finite
    estimate; it needs ``rng``.  The default estimate is exact.
    """
    rho = qcore.check_density(rho)
    if rho.shape != (4, 4):
        raise qcore.StateError("filtering acts on two-qubit states")
    rho_a, rho_b = _marginals(rho)
    if marginal_noise:
        if rng is None:
            raise ValueError("marginal_noise requires an rng")
        rho_a = rho_a + _traceless_noise(marginal_noise, rng)
        rho_b = rho_b + _traceless_noise(marginal_noise, rng)

    fa, lam_a = _side_filter(rho_a, eps_deg)
    fb, lam_b = _side_filter(rho_b, eps_deg)
    if side is Side.ALICE_ONLY:
        fb_applied = None
        m = np.kron(fa.operator(), np.eye(2))
    else:
        fb_applied = fb
        m = np.kron(fa.operator(), fb.operator())

    if fa.is_identity and (fb_applied is None or fb_applied.is_identity):
        # exact invariance: no floating-point churn on an identity filter
        return FilterRoundResult(rho.copy(), 1.0, (fa, fb_applied), (lam_a, lam_b))

    unnorm = qcore.conjugate(rho, m)
    p = float(np.trace(unnorm).real)
    if p <= qcore.ZERO_PROB:
        raise FilteringError(f"filtration succeeds with probability {p:.3e}")
    state = unnorm / p
    state = 0.5 * (state + state.conj().T)
    return FilterRoundResult(state, p, (fa, fb_applied), (lam_a, lam_b))


def _traceless_noise(scale: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    h = a + a.conj().T
    h -= np.trace(h) / 2 * np.eye(2)
    return scale * h / np.linalg.norm(h, 2)


@dataclass
class FilteringTrajectory:
    states: list[np.ndarray] = field(default_factory=list)
    p_succ: list[float] = field(default_factory=list)
    filters: list[tuple] = field(default_factory=list)
    marginal_eigs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    stagnation_round: int | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def fidelities(self) -> list[float]:
        return [qcore.fidelity_to_pure(s, PHI_PLUS) for s in self.states]

    def rows(self) -> list[dict]:
        rows = []
        for r, (state, p) in enumerate(zip(self.states, self.p_succ)):
            lam_a, lam_b = self.marginal_eigs[r]
            rows.append({
                "round": r,
                "p_succ": p,
                "fidelity": qcore.fidelity_to_pure(state, PHI_PLUS),
                "lambda0_A": float(lam_a[0]),
                "lambda0_B": float(lam_b[0]),
                "stagnated": self.stagnation_round is not None and r >= self.stagnation_round,
            })
        return rows


def _marginal_spectrum(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = _marginals(rho)
    return qcore.eigh(a)[0], qcore.eigh(b)[0]


def run_filtering(rho0: np.ndarray, rounds: int, side: Side = Side.ALICE_ONLY,
                  eps_deg: float = EPS_DEG, marginal_noise: float = 0.0,
                  rng: np.random.Generator | None = None) -> FilteringTrajectory:
    """Iterate ``filter_round`` and report when the state locks.

    Entry ``r`` of the trajectory is the state after round ``r`` (entry 0 is
    the input).  ``stagnation_round`` is the first round whose output differs
    from its input by less than 1e-12 in every matrix element.
    """
    if not 0 <= rounds <= MAX_ROUNDS:
        raise ValueError(f"rounds must lie in [0, {MAX_ROUNDS}], got {rounds}")
    rho = qcore.check_density(rho0)
    traj = FilteringTrajectory()
    traj.states.append(rho)
    traj.p_succ.append(1.0)
    traj.filters.append(())
    traj.marginal_eigs.append(_marginal_spectrum(rho))
    for r in range(1, rounds + 1):
        res = filter_round(rho, side, eps_deg, marginal_noise, rng)
        if traj.stagnation_round is None and np.max(np.abs(res.state - rho)) < STAGNATION_ATOL:
            traj.stagnation_round = r
        rho = res.state
        traj.states.append(rho)
        traj.p_succ.append(res.p_succ)
        traj.filters.append(res.filters)
        traj.marginal_eigs.append(_marginal_spectrum(rho))
    return traj


def schmidt_state(weight: float) -> np.ndarray:
    """``sqrt(w)|00> + sqrt(1 - w)|11>`` as a density matrix."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("Schmidt weight must lie in [0, 1]")
    psi = np.sqrt(weight) * qcore.ket("00") + np.sqrt(1.0 - weight) * qcore.ket("11")
    return qcore.dm(psi)
