"""Adversarial inputs: jamming states, binary-phase states, design ensembles, buffers."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from . import qcore
from .keystream import KeystreamSeed
from .qcore import MAX_DIM, PHI_PLUS, PHI_PLUS_DM, SEP_00_DM, SEP_11_DM

# separable, fidelity 1/2 to Phi+, both marginals exactly I/2
CLASSICAL_CORRELATED_DM = 0.5 * (SEP_00_DM + SEP_11_DM)


class ConfigurationError(ValueError):
    """An adversary specification that cannot be realized."""


# --------------------------------------------------------------------------- #
#                               specs                                         #
# --------------------------------------------------------------------------- #

class JammingModel(enum.Enum):
    EFFECTIVE = "effective"
    PHASE_STATE = "phase_state"
    STABILIZER_DESIGN = "stabilizer_design"


@dataclass(frozen=True)
class JammingSpec:
    eta: float
    model: JammingModel = JammingModel.EFFECTIVE
    n_qubits: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in [0, 1], got {self.eta}")
        if self.model is JammingModel.PHASE_STATE:
            if self.n_qubits is None or not 1 <= self.n_qubits <= 6:
                raise ConfigurationError("PhaseState model needs 1 <= n_qubits <= 6")


class EnsembleKind(enum.Enum):
    HAAR = "haar"
    BINARY_PHASE = "binary_phase"
    SINGLE_QUBIT_STABILIZER = "stabilizer"
    PHI_PLUS = "phi_plus"


# Sign-function enumeration over 2**d functions stays cheap up to d = 16.
_MAX_ENUMERABLE_PHASE_DIM = 16


@dataclass(frozen=True)
class EnsembleSpec:
    """A family of pure states on C^d.

    ``PHI_PLUS`` is the one-element ensemble holding the ideal Bell pair; it
    lets honest buffers be described with the same machinery as adversarial ones.
    """

    kind: EnsembleKind
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("ensemble dimension must be positive")
        if self.kind is EnsembleKind.SINGLE_QUBIT_STABILIZER and self.d != 2:
            raise ConfigurationError("the stabilizer ensemble lives on d = 2")
        if self.kind is EnsembleKind.BINARY_PHASE and self.d & (self.d - 1):
            raise ConfigurationError(f"BinaryPhase dimension must be a power of 2, got {self.d}")
        if self.kind is EnsembleKind.PHI_PLUS and self.d != 4:
            raise ConfigurationError("the Phi+ ensemble lives on d = 4")

    @classmethod
    def haar(cls, d: int) -> "EnsembleSpec":
        return cls(EnsembleKind.HAAR, d)

    @classmethod
    def binary_phase(cls, d: int) -> "EnsembleSpec":
        return cls(EnsembleKind.BINARY_PHASE, d)

    @classmethod
    def stabilizer(cls) -> "EnsembleSpec":
        return cls(EnsembleKind.SINGLE_QUBIT_STABILIZER, 2)

    @classmethod
    def phi_plus(cls) -> "EnsembleSpec":
        return cls(EnsembleKind.PHI_PLUS, 4)

    @property
    def enumerable(self) -> bool:
        if self.kind is EnsembleKind.HAAR:
            return False
        if self.kind is EnsembleKind.BINARY_PHASE:
            return self.d <= _MAX_ENUMERABLE_PHASE_DIM
        return True

    @property
    def size(self) -> int | None:
        if not self.enumerable:
            return None
        return {
            EnsembleKind.BINARY_PHASE: 2 ** self.d,
            EnsembleKind.SINGLE_QUBIT_STABILIZER: 6,
            EnsembleKind.PHI_PLUS: 1,
        }[self.kind]

    @property
    def label(self) -> str:
        return self.kind.value


class BufferMode(enum.Enum):
    IID_COPIES = "iid"
    GLOBAL_PSEUDORANDOM = "global"


@dataclass(frozen=True)
class BufferModel:
    mode: BufferMode
    k: int
    d: int

    def __post_init__(self):
        if self.k < 1 or self.d < 1:
            raise ConfigurationError("copies and per-copy dimension must be positive")
        if self.d ** self.k > MAX_DIM:
            raise ConfigurationError(
                f"buffer dimension d^k = {self.d}^{self.k} exceeds the cap of {MAX_DIM}"
            )

    @property
    def dim(self) -> int:
        return self.d ** self.k


# --------------------------------------------------------------------------- #
#                              jamming                                        #
# --------------------------------------------------------------------------- #

def jamming_state(spec: JammingSpec) -> np.ndarray:
    """Two-qubit jamming state ``(1 - eta) Phi+ + eta |00><00|``.

    At two qubits the pseudoentangled component is represented by its
    indistinguishable separable surrogate |00>; other models are rejected.
    """
    if spec.model is not JammingModel.EFFECTIVE:
        raise ConfigurationError(
            f"{spec.model.value} jamming is not modelled on a single two-qubit pair; "
            "use the effective model"
        )
    return (1.0 - spec.eta) * PHI_PLUS_DM + spec.eta * SEP_00_DM


def blind_jamming_state(eta: float) -> np.ndarray:
    """Jamming state as seen by a bounded observer of the local marginals.

    The pseudoentangled part is replaced by ``(|00><00| + |11><11|)/2``: still
    separable with fidelity 1/2, but with marginals that are exactly I/2, so
    marginal tomography cannot tell it from Phi+.  Fidelity is ``1 - eta/2``,
    the same as :func:`jamming_state`.
    """
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"eta must lie in [0, 1], got {eta}")
    return (1.0 - eta) * PHI_PLUS_DM + eta * CLASSICAL_CORRELATED_DM


# --------------------------------------------------------------------------- #
#                           binary-phase states                               #
# --------------------------------------------------------------------------- #

def binary_phase_state(signs: np.ndarray) -> np.ndarray:
    """``2^{-n/2} sum_x (-1)^{f(x)} |x>`` from the bit table ``f``."""
    f = np.asarray(signs, dtype=np.int64) & 1
    d = f.size
    if d & (d - 1) or d == 0:
        raise ConfigurationError(f"sign table length must be a power of 2, got {d}")
    return (1.0 - 2.0 * f).astype(complex) / np.sqrt(d)


def phase_state(n_qubits: int, seed: KeystreamSeed, index: int) -> np.ndarray:
    """Keystream-driven binary-phase state on ``n_qubits`` qubits."""
    if not 1 <= n_qubits <= 6:
        raise ConfigurationError(f"phase states support 1..6 qubits, got {n_qubits}")
    f = seed.bits(f"phase-state/{n_qubits}", index, 2 ** n_qubits)
    return binary_phase_state(f)


def all_binary_phase_states(d: int) -> np.ndarray:
    """Every binary-phase state on C^d, one per row (2**d rows)."""
    if d > _MAX_ENUMERABLE_PHASE_DIM:
        raise ConfigurationError(f"cannot enumerate 2^{d} sign functions")
    table = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    return (1.0 - 2.0 * table).astype(complex) / np.sqrt(d)


# --------------------------------------------------------------------------- #
#                              designs                                        #
# --------------------------------------------------------------------------- #

def stabilizer_ensemble() -> list[np.ndarray]:
    """The six single-qubit Pauli eigenstates (|0>, |1>, |+>, |->, |+i>, |-i>)."""
    s = 1 / np.sqrt(2)
    return [
        np.array([1, 0], dtype=complex),
        np.array([0, 1], dtype=complex),
        np.array([s, s], dtype=complex),
        np.array([s, -s], dtype=complex),
        np.array([s, 1j * s], dtype=complex),
        np.array([s, -1j * s], dtype=complex),
    ]


def ensemble_members(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    """States (rows) and weights of an enumerable ensemble."""
    if not spec.enumerable:
        raise ConfigurationError(f"{spec.label} ensemble at d={spec.d} is not enumerable")
    if spec.kind is EnsembleKind.SINGLE_QUBIT_STABILIZER:
        states = np.array(stabilizer_ensemble())
    elif spec.kind is EnsembleKind.BINARY_PHASE:
        states = all_binary_phase_states(spec.d)
    else:
        states = PHI_PLUS[None, :].copy()
    return states, np.full(len(states), 1.0 / len(states))


def sample_state(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one pure state from the ensemble."""
    if spec.kind is EnsembleKind.HAAR:
        return qcore.haar_sample(spec.d, rng)
    if spec.kind is EnsembleKind.BINARY_PHASE:
        return binary_phase_state(rng.integers(0, 2, size=spec.d))
    if spec.kind is EnsembleKind.SINGLE_QUBIT_STABILIZER:
        return stabilizer_ensemble()[int(rng.integers(6))]
    return PHI_PLUS.copy()


# --------------------------------------------------------------------------- #
#                              buffers                                        #
# --------------------------------------------------------------------------- #

def buffer_vector(model: BufferModel, spec: EnsembleSpec, seed: KeystreamSeed,
                  index: int = 0) -> np.ndarray:
    """Pure buffer state on (C^d)^{(x)k} as a vector.

    IID copies take the k-fold tensor power of one ensemble member; a global
    buffer draws a single state on the whole d^k-dimensional space.  Binary
    phase members come straight from the keystream, other kinds from a
    generator seeded by it.
    """
    rng = np.random.default_rng(seed.integer(f"buffer/{model.mode.value}/{spec.label}", index))
    if model.mode is BufferMode.IID_COPIES:
        if spec.d != model.d:
            raise ConfigurationError(f"ensemble d={spec.d} does not match buffer d={model.d}")
        if spec.kind is EnsembleKind.BINARY_PHASE and spec.d <= 64:
            psi = phase_state(int(np.log2(spec.d)), seed, index) if spec.d > 1 else np.ones(1, complex)
        else:
            psi = sample_state(spec, rng)
        return qcore.tensor_power(psi, model.k)

    dim = model.dim
    if spec.kind is EnsembleKind.HAAR:
        return qcore.haar_sample(dim, rng)
    if spec.kind is EnsembleKind.BINARY_PHASE:
        n = int(np.log2(dim))
        if 2 ** n != dim:
            raise ConfigurationError(f"global BinaryPhase buffer needs a power-of-2 dimension, got {dim}")
        if n <= 6:
            return phase_state(n, seed, index)
        return binary_phase_state(seed.bits(f"phase-state/{n}", index, dim))
    raise ConfigurationError(f"{spec.label} has no global form on {dim} dimensions")


def buffer_state(model: BufferModel, spec: EnsembleSpec, seed: KeystreamSeed,
                 index: int = 0) -> np.ndarray:
    return qcore.dm(buffer_vector(model, spec, seed, index))
