"""Blind Schur sampling: symmetric-subspace post-selection on a k-copy buffer."""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .adversary import BufferMode, BufferModel, EnsembleSpec, buffer_vector
from .keystream import KeystreamSeed
from .qcore import MAX_DIM, StateError

MAX_COPIES = 6

CSV_COLUMNS = ("d", "k", "buffer_model", "accept_mean", "accept_stderr", "dsym_ratio", "inv_kfact")


def sym_dim(d: int, k: int) -> int:
    """Dimension of the symmetric subspace of (C^d)^{(x)k}."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    return math.comb(d + k - 1, k)


def _check_caps(d: int, k: int) -> None:
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    if k > MAX_COPIES:
        raise StateError(f"k = {k} exceeds the symmetrizer limit of {MAX_COPIES} copies")
    if d ** k > MAX_DIM:
        raise StateError(f"d^k = {d}^{k} exceeds the cap of {MAX_DIM}")


def permutation_indices(d: int, k: int, perm: tuple[int, ...]) -> np.ndarray:
    """Index map of the copy permutation: output basis index for each input index.

    Copy ``j`` of the input lands in slot ``perm[j]`` of the output.
    """
    grid = np.indices((d,) * k).reshape(k, -1)
    out = np.empty_like(grid)
    for j, slot in enumerate(perm):
        out[slot] = grid[j]
    return np.ravel_multi_index(tuple(out), (d,) * k)


def permutation_operator(d: int, k: int, perm: tuple[int, ...]) -> np.ndarray:
    _check_caps(d, k)
    dim = d ** k
    u = np.zeros((dim, dim))
    u[permutation_indices(d, k, perm), np.arange(dim)] = 1.0
    return u


@dataclass(frozen=True)
class SymmetricProjector:
    d: int
    k: int
    matrix: np.ndarray
    dim_sym: int


@functools.lru_cache(maxsize=32)
def sym_projector(d: int, k: int) -> SymmetricProjector:
    """Symmetrizer ``(1/k!) sum_pi U_pi`` on (C^d)^{(x)k}.

    Only the accept/reject bit on the symmetric sector is ever needed, so the
    permutation average replaces a full Schur transform.  The result is cached
    and read-only.
    """
    _check_caps(d, k)
    dim = d ** k
    acc = np.zeros(dim * dim)
    cols = np.arange(dim)
    for perm in itertools.permutations(range(k)):
        rows = permutation_indices(d, k, perm)
        np.add.at(acc, rows * dim + cols, 1.0)
    matrix = acc.reshape(dim, dim) / math.factorial(k)
    matrix.setflags(write=False)
    return SymmetricProjector(d, k, matrix, sym_dim(d, k))


def schur_accept_prob(buffer: np.ndarray, projector: SymmetricProjector) -> float:
    """Probability that the buffer is found in the symmetric sector.

    ``buffer`` may be a pure state vector or a density matrix.
    """
    buffer = np.asarray(buffer)
    dim = projector.matrix.shape[0]
    if buffer.shape not in ((dim,), (dim, dim)):
        raise StateError(f"buffer of shape {buffer.shape} does not match projector dim {dim}")
    if buffer.ndim == 1:
        p = float(np.vdot(buffer, projector.matrix @ buffer).real)
    else:
        p = float(np.einsum("ij,ji->", projector.matrix, buffer).real)
    if p < -1e-12 or p > 1 + 1e-12:
        raise StateError(f"acceptance probability {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


@dataclass(frozen=True)
class SchurVerdictStats:
    accept_prob: float
    accept_stderr: float
    model: BufferModel
    ensemble: EnsembleSpec
    samples: int

    @property
    def extinction_ratio(self) -> float:
        return 1.0 / self.accept_prob if self.accept_prob > 0 else float("inf")

    @property
    def dsym_ratio(self) -> float:
        return sym_dim(self.model.d, self.model.k) / self.model.d ** self.model.k

    @property
    def inv_kfact(self) -> float:
        return 1.0 / math.factorial(self.model.k)

    def row(self) -> dict:
        return {
            "d": self.model.d,
            "k": self.model.k,
            "buffer_model": self.model.mode.value,
            "accept_mean": self.accept_prob,
            "accept_stderr": self.accept_stderr,
            "dsym_ratio": self.dsym_ratio,
            "inv_kfact": self.inv_kfact,
        }


def schur_filter_game(model: BufferModel, spec: EnsembleSpec, samples: int,
                      seed: KeystreamSeed) -> SchurVerdictStats:
    """Average symmetric-sector acceptance over ``samples`` adversarial buffers."""
    if samples < 1:
        raise ValueError("samples must be positive")
    proj = sym_projector(model.d, model.k)
    probs = np.array([
        schur_accept_prob(buffer_vector(model, spec, seed, i), proj) for i in range(samples)
    ])
    stderr = float(probs.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return SchurVerdictStats(float(probs.mean()), stderr, model, spec, samples)


def iid_buffer_model(d: int, k: int) -> BufferModel:
    return BufferModel(BufferMode.IID_COPIES, k, d)


def global_buffer_model(d: int, k: int) -> BufferModel:
    return BufferModel(BufferMode.GLOBAL_PSEUDORANDOM, k, d)
