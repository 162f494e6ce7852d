"""Dense state primitives shared by every protocol module.

States are plain numpy arrays: a 1-D complex vector is a pure state, a 2-D
square complex matrix is a density matrix.  Multi-qubit registers follow
the ordering A1, B1, A2, B2 (source pair first, target pair second), so a
two-pair register is ``kron(rho_source, rho_target)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DIM = 4096

HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
PSD_ATOL = 1e-10
NORM_ATOL = 1e-12
ZERO_PROB = 1e-12


class StateError(ValueError):
    """Raised when an array violates a state invariant or dimension contract."""


# --------------------------------------------------------------------------- #
#                              validation                                     #
# --------------------------------------------------------------------------- #

def check_pure(psi: np.ndarray, atol: float = NORM_ATOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or psi.size == 0:
        raise StateError(f"pure state must be a non-empty vector, got shape {psi.shape}")
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > atol:
        raise StateError(f"pure state has squared norm {norm2!r}")
    return psi


def check_density(rho: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate a density matrix and return it as a complex array.

    Hermiticity, unit trace and positivity are each checked to ``atol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
        raise StateError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > atol:
        raise StateError(f"matrix is not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise StateError(f"trace is {tr!r}, expected 1")
    lam_min = np.linalg.eigvalsh(rho)[0]
    if lam_min < -atol:
        raise StateError(f"matrix is not PSD (min eigenvalue {lam_min:.3e})")
    return rho


def is_density(rho: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    try:
        check_density(rho, atol)
    except StateError:
        return False
    return True


def _check_dim(dim: int) -> None:
    if dim > MAX_DIM:
        raise StateError(f"dimension {dim} exceeds the cap of {MAX_DIM}")


# --------------------------------------------------------------------------- #
#                           standard states                                   #
# --------------------------------------------------------------------------- #

def ket(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("01")``."""
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def dm(psi: np.ndarray) -> np.ndarray:
    """Projector onto a pure state."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


PHI_PLUS = (ket("00") + ket("11")) / np.sqrt(2)
PHI_PLUS_DM = dm(PHI_PLUS)
SEP_00_DM = dm(ket("00"))
SEP_11_DM = dm(ket("11"))


# --------------------------------------------------------------------------- #
#                              gates                                          #
# --------------------------------------------------------------------------- #

def cnot(control: int, target: int, n_qubits: int) -> np.ndarray:
    """CNOT on an ``n_qubits`` register, qubit 0 being the most significant."""
    dim = 2 ** n_qubits
    idx = np.arange(dim)
    cbit = (idx >> (n_qubits - 1 - control)) & 1
    out = idx ^ (cbit << (n_qubits - 1 - target))
    u = np.zeros((dim, dim), dtype=complex)
    u[out, idx] = 1.0
    return u


def bilateral_cnot() -> np.ndarray:
    """CNOT(A1->A2) . CNOT(B1->B2) on the A1, B1, A2, B2 register."""
    return cnot(0, 2, 4) @ cnot(1, 3, 4)


# --------------------------------------------------------------------------- #
#                              operations                                     #
# --------------------------------------------------------------------------- #

def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two states of the same kind (both pure or both mixed)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise StateError("tensor operands must both be vectors or both be matrices")
    dim = a.shape[0] * b.shape[0]
    _check_dim(dim)
    return np.kron(a, b)


def tensor_power(a: np.ndarray, k: int) -> np.ndarray:
    out = np.asarray(a, dtype=complex)
    for _ in range(k - 1):
        out = tensor(out, a)
    return out


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced state on the subsystems listed in ``keep``.

    Parameters
    ----------
    rho : np.ndarray
        Square matrix over ``prod(dims)`` dimensions.
    dims : sequence of int
        Subsystem dimensions, most significant first.
    keep : sequence of int
        Indices of subsystems to retain.  Output ordering follows ``dims``.

    Returns
    -------
    np.ndarray
        Square matrix over ``prod(dims[i] for i in keep)``.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"partial_trace needs a square matrix, got {rho.shape}")
    if int(np.prod(dims)) != rho.shape[0]:
        raise StateError(f"subsystem dims {dims} do not multiply to {rho.shape[0]}")
    keep = sorted(set(int(i) for i in keep))
    if any(i < 0 or i >= len(dims) for i in keep):
        raise StateError(f"keep indices {keep} out of range for {len(dims)} subsystems")

    n = len(dims)
    t = rho.reshape(dims + dims)
    # trace from the highest index down so earlier axis numbers stay valid
    live = n
    for i in reversed(range(n)):
        if i in keep:
            continue
        t = np.trace(t, axis1=i, axis2=i + live)
        live -= 1
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(dk, dk)


def eigh(rho: np.ndarray, atol: float = HERMITIAN_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with eigenvalues in descending order.

    Columns of the returned unitary are the eigenvectors.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"eigh needs a square matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise StateError("eigh received a non-Hermitian matrix")
    w, v = np.linalg.eigh(rho)
    return w[::-1].copy(), v[:, ::-1].copy()


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b``, clipped to [0, 1]."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise StateError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    td = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    return min(max(td, 0.0), 1.0)


def fidelity_to_pure(rho: np.ndarray, psi: np.ndarray) -> float:
    """<psi|rho|psi>, clipped to [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if rho.shape != (psi.size, psi.size):
        raise StateError(f"state of shape {rho.shape} vs vector of length {psi.size}")
    f = float(np.vdot(psi, rho @ psi).real)
    return min(max(f, 0.0), 1.0)


def conjugate(rho: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``m @ rho @ m^dagger``; normalization is left to the caller."""
    rho = np.asarray(rho, dtype=complex)
    m = np.asarray(m, dtype=complex)
    if m.shape[1] != rho.shape[0] or rho.shape[0] != rho.shape[1]:
        raise StateError(f"cannot conjugate {rho.shape} by {m.shape}")
    return m @ rho @ m.conj().T


def haar_sample(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state in dimension ``d``."""
    if d < 1:
        raise StateError("dimension must be positive")
    _check_dim(d)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


@dataclass(frozen=True)
class PostselectResult:
    """Outcome of projecting a state onto one measurement branch.

    ``state`` is ``None`` when the branch has probability at most 1e-12;
    ``empty`` flags that case.
    """

    state: np.ndarray | None
    probability: float

    @property
    def empty(self) -> bool:
        return self.state is None


def postselect(rho: np.ndarray, projector: np.ndarray) -> PostselectResult:
    rho = np.asarray(rho, dtype=complex)
    p = np.asarray(projector, dtype=complex)
    if p.shape != rho.shape:
        raise StateError(f"projector {p.shape} does not match state {rho.shape}")
    if np.max(np.abs(p @ p - p)) > HERMITIAN_ATOL or np.max(np.abs(p - p.conj().T)) > HERMITIAN_ATOL:
        raise StateError("projector is not a Hermitian idempotent")
    branch = p @ rho @ p
    prob = float(np.trace(branch).real)
    prob = min(max(prob, 0.0), 1.0)
    if prob <= ZERO_PROB:
        return PostselectResult(None, prob)
    return PostselectResult(branch / np.trace(branch).real, prob)


# --------------------------------------------------------------------------- #
#                          seeded substreams                                  #
# --------------------------------------------------------------------------- #

def seed_bytes(master: int | str | bytes) -> bytes:
    if isinstance(master, bytes):
        return master
    if isinstance(master, int):
        return master.to_bytes(max(1, (master.bit_length() + 7) // 8), "big")
    master = master.lower().removeprefix("0x")
    return bytes.fromhex(master.zfill(len(master) + len(master) % 2))


def substream(master: int | str | bytes, label: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(label, index)`` under a master seed.

    The stream depends only on its own coordinates, so tasks can be run in
    any order (or in parallel) and draw identical numbers.
    """
    h = hashlib.sha256()
    h.update(seed_bytes(master))
    h.update(b"\x00")
    h.update(label.encode())
    h.update(b"\x00")
    h.update(str(int(index)).encode())
    return np.random.default_rng(np.random.SeedSequence(int.from_bytes(h.digest(), "big")))
