"""Tomographic verification against design ensembles.

Ensemble moments, the Helstrom discrimination bound between two moments, an
iterative maximum-likelihood reconstructor for heartbeat tomography, and an
empirical discrimination experiment that pits a concrete measurement against
the bound.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import qcore
from .adversary import ConfigurationError, EnsembleKind, EnsembleSpec, ensemble_members, sample_state
from .errors import ExperimentError
from .qcore import MAX_DIM
from .schur import sym_projector


class BoundViolation(ExperimentError):
    """An empirical discrimination rate beat the Helstrom bound beyond sampling slack."""


CSV_COLUMNS = ("ensemble", "d", "k", "delta", "p_detect_bound", "empirical_accuracy", "samples")


# --------------------------------------------------------------------------- #
#                               moments                                       #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class MomentOperator:
    k: int
    d: int
    matrix: np.ndarray
    provenance: str  # "exact" or "monte_carlo"
    samples: int | None = None


def _check_moment_dims(d: int, k: int) -> None:
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    if d ** k > MAX_DIM:
        raise qcore.StateError(f"d^k = {d}^{k} exceeds the cap of {MAX_DIM}")


def _power_rows(states: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-fold tensor powers of a stack of vectors."""
    out = states
    for _ in range(k - 1):
        out = np.einsum("ni,nj->nij", out, states).reshape(len(states), -1)
    return out


def ensemble_moment(spec: EnsembleSpec, k: int, samples: int | None = None,
                    rng: np.random.Generator | None = None) -> MomentOperator:
    """k-th moment ``E[(|psi><psi|)^{(x)k}]`` of an ensemble.

    With ``samples=None`` the moment is computed exactly by enumeration, which
    requires an enumerable ensemble.  Otherwise it is a Monte Carlo mean over
    ``samples`` draws from ``rng``.
    """
    _check_moment_dims(spec.d, k)
    if samples is None:
        if not spec.enumerable:
            raise ConfigurationError(
                f"exact moment requested for non-enumerable {spec.label} ensemble; "
                "use haar_moment or pass a sample count"
            )
        states, weights = ensemble_members(spec)
        vecs = _power_rows(states, k)
        matrix = (vecs.T * weights) @ vecs.conj()
        return MomentOperator(k, spec.d, matrix, "exact")

    if samples < 1 or rng is None:
        raise ValueError("Monte Carlo moments need samples >= 1 and an rng")
    dim = spec.d ** k
    matrix = np.zeros((dim, dim), dtype=complex)
    batch = max(1, min(samples, 2 ** 20 // dim))
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        states = np.array([sample_state(spec, rng) for _ in range(n)])
        vecs = _power_rows(states, k)
        matrix += vecs.T @ vecs.conj()
        done += n
    return MomentOperator(k, spec.d, matrix / samples, "monte_carlo", samples)


def haar_moment(d: int, k: int) -> MomentOperator:
    """Exact Haar moment: symmetric projector over its dimension."""
    _check_moment_dims(d, k)
    proj = sym_projector(d, k)
    return MomentOperator(k, d, proj.matrix.astype(complex) / proj.dim_sym, "exact")


def reference_moment(spec: EnsembleSpec, k: int, samples: int | None = None,
                     rng: np.random.Generator | None = None) -> MomentOperator:
    """Exact moment where available (enumeration or Haar closed form), else Monte Carlo."""
    if spec.kind is EnsembleKind.HAAR:
        return haar_moment(spec.d, k)
    if spec.enumerable:
        return ensemble_moment(spec, k)
    return ensemble_moment(spec, k, samples, rng)


# --------------------------------------------------------------------------- #
#                               Helstrom                                      #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class AdvantageReport:
    delta: float
    p_detect: float
    k: int
    d: int


def helstrom_advantage(a: MomentOperator, b: MomentOperator) -> AdvantageReport:
    """Optimal equal-prior discrimination between two moments."""
    if (a.k, a.d) != (b.k, b.d):
        raise ValueError(f"moment shapes differ: (k={a.k}, d={a.d}) vs (k={b.k}, d={b.d})")
    delta = qcore.trace_distance(a.matrix, b.matrix)
    return AdvantageReport(delta, 0.5 + delta / 2, a.k, a.d)


# --------------------------------------------------------------------------- #
#                                POVMs                                        #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class PovmSpec:
    elements: tuple[np.ndarray, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.elements) != len(self.labels):
            raise ValueError("one label per POVM element")
        dim = self.elements[0].shape[0]
        total = sum(self.elements)
        if np.max(np.abs(total - np.eye(dim))) > 1e-10:
            raise ValueError("POVM elements do not sum to the identity")
        for label, e in zip(self.labels, self.elements):
            if np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0] < -1e-10:
                raise ValueError(f"POVM element {label} is not PSD")

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def stacked(self) -> np.ndarray:
        return np.array(self.elements)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("nij,ji->n", self.stacked(), rho).real


_S = 1 / np.sqrt(2)
# rows map the computational basis onto the X, Y, Z eigenbases (+ first)
_PAULI_BASES = {
    "X": np.array([[_S, _S], [_S, -_S]], dtype=complex),
    "Y": np.array([[_S, -1j * _S], [_S, 1j * _S]], dtype=complex),
    "Z": np.eye(2, dtype=complex),
}


@functools.lru_cache(maxsize=64)
def pauli_setting_unitary(setting: str) -> np.ndarray:
    """Unitary whose computational-basis readout measures ``setting`` (e.g. "XZ")."""
    u = np.ones((1, 1), dtype=complex)
    for axis in setting:
        u = np.kron(u, _PAULI_BASES[axis])
    return u


def pauli_povm(n_qubits: int) -> PovmSpec:
    """Pauli-product heartbeat POVM: uniformly random local Pauli basis, then readout."""
    if not 1 <= n_qubits <= 3:
        raise ValueError("pauli_povm materializes 6^n elements; use 1 <= n <= 3")
    elements, labels = [], []
    weight = 1.0 / 3 ** n_qubits
    for setting in itertools.product("XYZ", repeat=n_qubits):
        u = pauli_setting_unitary("".join(setting))
        for outcome in range(2 ** n_qubits):
            row = u[outcome]
            elements.append(weight * np.outer(row.conj(), row))
            bits = format(outcome, f"0{n_qubits}b")
            labels.append("".join(f"{a}{'+-'[int(b)]}" for a, b in zip(setting, bits)))
    return PovmSpec(tuple(elements), tuple(labels))


# --------------------------------------------------------------------------- #
#                                  MLE                                        #
# --------------------------------------------------------------------------- #

@dataclass
class MleResult:
    state: np.ndarray
    iterations: int
    converged: bool
    log_likelihood: list[float] = field(default_factory=list)


def _kl_divergence(freqs: np.ndarray, probs: np.ndarray) -> float:
    """KL(f || p) summed as ``f (d - log1p(d))`` with ``d = (p - f) / f``.

    Every term is nonnegative and second order near ``p = f``, so small
    likelihood gaps are resolved far below the rounding of a plain log sum.
    """
    mask = freqs > 0
    delta = (probs[mask] - freqs[mask]) / freqs[mask]
    return float(np.sum(freqs[mask] * (delta - np.log1p(delta))) + np.sum(probs[~mask]))


def _log_likelihood(freqs: np.ndarray, probs: np.ndarray) -> float:
    mask = freqs > 0
    return float(np.sum(freqs[mask] * np.log(freqs[mask]))) - _kl_divergence(freqs, probs)


# diluted R rho R iterations before the factored refinement takes over
RRR_WARMUP = 100


def mle_reconstruct(frequencies, povm: PovmSpec, max_iters: int = 500,
                    tol: float = 1e-12) -> MleResult:
    """Maximum-likelihood state from POVM frequencies.

    The first ``RRR_WARMUP`` iterations are the R rho R fixed-point map
    ``rho -> R rho R / Tr(...)`` with ``R = sum_i (f_i / p_i(rho)) M_i``.  If a
    full step would lower the likelihood, the diluted operator
    ``(I + eps R) / (1 + eps)`` is used with ``eps`` halved until it does not.

    R rho R slows to a crawl when the optimum is rank deficient, since the
    vanishing eigenvalues decay only like ``1/n``.  If it has not converged
    after the warm-up, the remaining budget goes to L-BFGS on the factor
    ``A`` of ``rho = A A^dag / Tr(A A^dag)``, where such optima are interior
    points.  Each recorded iterate of either phase has likelihood no lower
    than the previous one.

    Returns
    -------
    MleResult
        Final state, iteration count, convergence flag and the log-likelihood
        after every iteration (entry 0 is the maximally mixed start).
    """
    f = np.asarray(frequencies, dtype=float)
    if f.shape != (len(povm.elements),):
        raise ValueError(f"{f.size} frequencies for {len(povm.elements)} POVM elements")
    if np.any(f < 0) or abs(f.sum() - 1.0) > 1e-10:
        raise ValueError("frequencies must be nonnegative and sum to 1")
    ms = povm.stacked()
    dim = povm.dim
    eye = np.eye(dim, dtype=complex)

    def probs_of(rho):
        p = np.einsum("nij,ji->n", ms, rho).real
        if np.any((p <= 0) & (f > 0)):
            return None
        return p

    def r_operator(p):
        ratio = np.where(f > 0, f / np.where(p > 0, p, 1.0), 0.0)
        return np.einsum("n,nij->ij", ratio, ms)

    rho = eye / dim
    p = probs_of(rho)
    history = [_log_likelihood(f, p)]
    converged = False
    it = 0
    for it in range(1, min(max_iters, RRR_WARMUP) + 1):
        if p is None:
            rho = (1 - 1e-12) * rho + 1e-12 * eye / dim
            p = probs_of(rho)
        r_op = r_operator(p)

        eps = None  # None means the undiluted step
        new = None
        while True:
            step = r_op if eps is None else (eye + eps * r_op) / (1 + eps)
            cand = step @ rho @ step.conj().T
            cand = cand / np.trace(cand).real
            cand = 0.5 * (cand + cand.conj().T)
            p_new = probs_of(cand)
            if p_new is not None and _log_likelihood(f, p_new) >= history[-1]:
                new = cand
                break
            eps = 1.0 if eps is None else eps / 2
            if eps < 1e-12:
                break
        if new is None:
            converged = True
            it -= 1
            break
        change = float(np.max(np.abs(new - rho)))
        rho, p = new, probs_of(new)
        history.append(_log_likelihood(f, p))
        if change < tol:
            converged = True
            break

    if not converged and it < max_iters:
        rho, extra, converged = _refine_factored(f, ms, rho, max_iters - it, history, r_operator)
        it += extra
    return MleResult(rho, it, converged, history)


def _refine_factored(f, ms, rho0, budget, history, r_operator):
    """L-BFGS on ``A`` with ``rho = A A^dag / Tr``; appends to ``history``."""
    dim = rho0.shape[0]
    eye = np.eye(dim)
    w, v = np.linalg.eigh(rho0)
    a0 = v * np.sqrt(np.clip(w, 0.0, None))

    def unpack(x):
        return (x[: dim * dim] + 1j * x[dim * dim:]).reshape(dim, dim)

    def state_of(x):
        a = unpack(x)
        rho = a @ a.conj().T
        return a, rho / np.trace(rho).real

    def objective(x):
        a, rho = state_of(x)
        p = np.einsum("nij,ji->n", ms, rho).real
        if np.any((p <= 0) & (f > 0)):
            return np.inf, np.zeros_like(x)
        # d KL / d rho = I - R, pulled back through the normalized factor
        b = a.conj().T @ (r_operator(p) - eye) * (-2.0 / np.trace(a @ a.conj().T).real)
        return _kl_divergence(f, p), np.concatenate([b.T.real.ravel(), -b.T.imag.ravel()])

    best = {"rho": rho0, "steps": 0}

    def record(xk):
        _, rho = state_of(xk)
        ll = _log_likelihood(f, np.einsum("nij,ji->n", ms, rho).real)
        best["steps"] += 1
        if ll >= history[-1]:
            history.append(ll)
            best["rho"] = 0.5 * (rho + rho.conj().T)

    x0 = np.concatenate([a0.real.ravel(), a0.imag.ravel()])
    res = minimize(objective, x0, jac=True, method="L-BFGS-B", callback=record,
                   options={"maxiter": budget, "ftol": 0.0, "gtol": 0.0, "maxcor": 30})
    # status 1 is the iteration cap; other stops mean no resolvable progress remains
    return best["rho"], best["steps"], res.status != 1


# --------------------------------------------------------------------------- #
#                           blindness experiment                              #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BlindnessResult:
    report: AdvantageReport
    empirical_accuracy: float
    helstrom_accuracy: float
    trials: int
    adversary: EnsembleSpec
    reference: EnsembleSpec

    @property
    def sigma(self) -> float:
        """Binomial standard error of an accuracy near 1/2."""
        return 0.5 / np.sqrt(self.trials)

    def row(self) -> dict:
        return {
            "ensemble": self.adversary.label,
            "d": self.report.d,
            "k": self.report.k,
            "delta": self.report.delta,
            "p_detect_bound": self.report.p_detect,
            "empirical_accuracy": self.empirical_accuracy,
            "samples": self.trials,
        }


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2 ** n != dim:
        raise ConfigurationError(f"Pauli heartbeat needs a power-of-2 buffer dimension, got {dim}")
    return n


def blindness_experiment(adversary: EnsembleSpec, k: int, samples: int,
                         rng: np.random.Generator, reference: EnsembleSpec | None = None,
                         moment_samples: int = 20000, check_bound: bool = True) -> BlindnessResult:
    """Discriminate k-copy buffers of ``adversary`` from ``reference`` (Haar by default).

    The moment-level Helstrom bound is computed exactly where possible.  Each
    of ``samples`` trials flips a fair coin, draws a buffer ``psi^{(x)k}`` from
    the selected ensemble and measures it twice, once with the Pauli-product
    heartbeat POVM (followed by a likelihood-ratio guess under the two
    moments) and once with the Helstrom measurement.  Accuracies are the
    fractions of correct guesses.

    With ``check_bound`` a :class:`BoundViolation` is raised if either
    accuracy exceeds ``p_detect + 3 sigma``.
    """
    if reference is None:
        reference = EnsembleSpec.haar(adversary.d)
    if reference.d != adversary.d:
        raise ValueError("adversary and reference ensembles must share d")
    if samples < 1:
        raise ValueError("samples must be positive")
    d = adversary.d
    dim = d ** k
    n_qubits = _n_qubits(dim)

    mom_adv = reference_moment(adversary, k, moment_samples, rng)
    mom_ref = reference_moment(reference, k, moment_samples, rng)
    report = helstrom_advantage(mom_adv, mom_ref)

    diff = mom_adv.matrix - mom_ref.matrix
    w, v = np.linalg.eigh(0.5 * (diff + diff.conj().T))
    pos = v[:, w > 1e-12]
    has_helstrom = pos.shape[1] > 0

    diag_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def setting_probs(setting: str):
        if setting not in diag_cache:
            u = pauli_setting_unitary(setting)
            pa = np.einsum("ij,jk,ik->i", u, mom_adv.matrix, u.conj()).real
            pr = np.einsum("ij,jk,ik->i", u, mom_ref.matrix, u.conj()).real
            diag_cache[setting] = (pa, pr)
        return diag_cache[setting]

    correct_pauli = 0
    correct_hel = 0
    for _ in range(samples):
        truth = int(rng.integers(2))  # 1: adversary, 0: reference
        psi = sample_state(adversary if truth else reference, rng)
        buf = qcore.tensor_power(psi, k)

        setting = "".join("XYZ"[i] for i in rng.integers(0, 3, size=n_qubits))
        amps = pauli_setting_unitary(setting) @ buf
        born = np.abs(amps) ** 2
        outcome = int(rng.choice(dim, p=born / born.sum()))
        pa, pr = setting_probs(setting)
        if abs(pa[outcome] - pr[outcome]) <= 1e-12:
            guess = int(rng.integers(2))
        else:
            guess = int(pa[outcome] > pr[outcome])
        correct_pauli += guess == truth

        if has_helstrom:
            p_adv = float(np.sum(np.abs(pos.conj().T @ buf) ** 2))
            guess = int(rng.random() < p_adv)
        else:
            guess = int(rng.integers(2))
        correct_hel += guess == truth

    result = BlindnessResult(report, correct_pauli / samples, correct_hel / samples,
                             samples, adversary, reference)
    if check_bound:
        limit = report.p_detect + 3 * result.sigma
        worst = max(result.empirical_accuracy, result.helstrom_accuracy)
        if worst > limit:
            raise BoundViolation(f"accuracy {worst:.4f} exceeds bound {report.p_detect:.4f} + 3 sigma")
    return result
