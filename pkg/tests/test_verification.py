import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import sqrtm
from scipy.special import rel_entr
from scipy.stats import unitary_group

from jamlab import qcore, verification
from jamlab.adversary import ConfigurationError, EnsembleSpec, JammingSpec, jamming_state
from jamlab.schur import sym_projector
from jamlab.verification import (
    BoundViolation,
    MomentOperator,
    PovmSpec,
    blindness_experiment,
    ensemble_moment,
    haar_moment,
    helstrom_advantage,
    mle_reconstruct,
    pauli_povm,
)

SWAP = np.eye(4)[[0, 2, 1, 3]]


def exact(matrix, k, d):
    return MomentOperator(k, d, np.asarray(matrix, dtype=complex), "exact")


# ----------------------------------------------------------------- moments

def test_stabilizer_first_moment():
    np.testing.assert_allclose(ensemble_moment(EnsembleSpec.stabilizer(), 1).matrix,
                               np.eye(2) / 2, atol=1e-15)


def test_binary_phase_first_moment_is_flat():
    m = ensemble_moment(EnsembleSpec.binary_phase(4), 1)
    assert m.provenance == "exact"
    np.testing.assert_allclose(m.matrix, np.eye(4) / 4, atol=1e-15)


def test_stabilizer_second_moment_matches_swap_formula():
    # (I + SWAP) / (d (d + 1)) is the Haar second moment for d = 2
    m = ensemble_moment(EnsembleSpec.stabilizer(), 2).matrix
    np.testing.assert_allclose(m, (np.eye(4) + SWAP) / 6, atol=1e-12)


def test_stabilizer_states_are_a_three_design_but_not_four():
    gap3 = helstrom_advantage(ensemble_moment(EnsembleSpec.stabilizer(), 3), haar_moment(2, 3))
    gap4 = helstrom_advantage(ensemble_moment(EnsembleSpec.stabilizer(), 4), haar_moment(2, 4))
    assert gap3.delta <= 1e-12
    assert gap4.delta > 1e-3


def test_exact_haar_moment_is_refused():
    with pytest.raises(ConfigurationError):
        ensemble_moment(EnsembleSpec.haar(2), 2)


def test_haar_moment_examples():
    np.testing.assert_allclose(haar_moment(2, 1).matrix, np.eye(2) / 2)
    m22 = haar_moment(2, 2).matrix
    assert np.trace(m22).real == pytest.approx(1) and np.linalg.matrix_rank(m22) == 3
    np.testing.assert_allclose(m22, (np.eye(4) + SWAP) / 6, atol=1e-15)
    m42 = haar_moment(4, 2).matrix
    assert np.trace(m42).real == pytest.approx(1) and np.linalg.matrix_rank(m42) == 10


def test_haar_moment_equals_projector_over_dimension():
    for d, k in ((2, 2), (2, 3), (4, 2), (3, 3)):
        p = sym_projector(d, k)
        np.testing.assert_allclose(haar_moment(d, k).matrix, p.matrix / p.dim_sym, atol=1e-12)


@pytest.mark.parametrize("d,k", [(2, 2), (2, 3), (3, 2)])
def test_haar_moment_is_unitarily_invariant(d, k):
    m = haar_moment(d, k).matrix
    for u in unitary_group.rvs(d, size=20, random_state=1):
        uk = qcore.tensor_power(u, k) if k > 1 else u
        np.testing.assert_allclose(uk @ m @ uk.conj().T, m, atol=1e-10)


def test_monte_carlo_moment_converges():
    ratios = []
    exact_m = haar_moment(2, 2).matrix
    for t in range(10):
        rng = np.random.default_rng(100 + t)
        small = ensemble_moment(EnsembleSpec.haar(2), 2, samples=500, rng=rng)
        large = ensemble_moment(EnsembleSpec.haar(2), 2, samples=2000, rng=rng)
        assert large.provenance == "monte_carlo" and large.samples == 2000
        ratios.append(qcore.trace_distance(small.matrix, exact_m)
                      / qcore.trace_distance(large.matrix, exact_m))
    assert np.mean(ratios) >= 1.5


def test_moment_cap():
    with pytest.raises(qcore.StateError):
        haar_moment(4, 7)


# ----------------------------------------------------------------- Helstrom

def test_helstrom_examples():
    h = haar_moment(2, 2)
    same = helstrom_advantage(h, h)
    assert same.delta == 0 and same.p_detect == 0.5
    r = helstrom_advantage(exact(np.diag([1, 0]), 1, 2), exact(np.eye(2) / 2, 1, 2))
    assert r.delta == pytest.approx(0.5) and r.p_detect == pytest.approx(0.75)
    stab = helstrom_advantage(ensemble_moment(EnsembleSpec.stabilizer(), 2), h)
    assert stab.delta <= 1e-10


def test_helstrom_rejects_mismatched_moments():
    with pytest.raises(ValueError):
        helstrom_advantage(haar_moment(2, 2), haar_moment(2, 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_helstrom_report_identity(seed):
    rng = np.random.default_rng(seed)
    a = ensemble_moment(EnsembleSpec.haar(2), 2, samples=5, rng=rng)
    r = helstrom_advantage(a, haar_moment(2, 2))
    assert r.p_detect == 0.5 + r.delta / 2
    assert 0 <= r.delta <= 1


# -------------------------------------------------------------------- POVMs

@pytest.mark.parametrize("n", [1, 2, 3])
def test_pauli_povm_is_complete(n):
    povm = pauli_povm(n)
    assert len(povm.elements) == 6 ** n
    np.testing.assert_allclose(sum(povm.elements), np.eye(2 ** n), atol=1e-12)


def test_pauli_povm_statistics_of_plus_state():
    plus = qcore.dm(np.array([1, 1]) / np.sqrt(2))
    probs = dict(zip(pauli_povm(1).labels, pauli_povm(1).probabilities(plus)))
    assert probs["X+"] == pytest.approx(1 / 3) and probs["X-"] == pytest.approx(0, abs=1e-15)
    assert probs["Z+"] == pytest.approx(1 / 6) and probs["Y-"] == pytest.approx(1 / 6)


def test_povm_validation():
    with pytest.raises(ValueError):
        PovmSpec((np.eye(2) / 2,), ("half",))
    with pytest.raises(ValueError):
        PovmSpec((np.diag([1.5, 1]), np.diag([-0.5, 0])), ("a", "b"))


# ---------------------------------------------------------------------- MLE

def _assert_monotone(result):
    ll = result.log_likelihood
    assert all(b >= a - 1e-15 for a, b in zip(ll, ll[1:]))


def test_mle_maximally_mixed_is_a_fixed_point():
    povm = pauli_povm(1)
    res = mle_reconstruct(povm.probabilities(np.eye(2) / 2), povm)
    np.testing.assert_allclose(res.state, np.eye(2) / 2, atol=1e-8)
    assert res.converged


def test_mle_recovers_plus_state():
    povm = pauli_povm(1)
    plus = np.array([1, 1]) / np.sqrt(2)
    res = mle_reconstruct(povm.probabilities(qcore.dm(plus)), povm, max_iters=500)
    assert qcore.fidelity_to_pure(res.state, plus) >= 1 - 1e-6
    assert res.iterations <= 500
    _assert_monotone(res)


@pytest.mark.parametrize("eta,diag", [(0.4, [0.7, 0.3]), (0.6, [0.8, 0.2])])
def test_mle_recovers_jamming_marginal(eta, diag):
    # marginal of (1 - eta) Phi+ + eta |00><00| is diag(1 - eta/2, eta/2)
    povm = pauli_povm(1)
    marginal = qcore.partial_trace(jamming_state(JammingSpec(eta)), [2, 2], keep=[0])
    res = mle_reconstruct(povm.probabilities(marginal), povm)
    np.testing.assert_allclose(res.state, np.diag(diag), atol=1e-6)
    _assert_monotone(res)


def test_mle_two_qubit_states():
    povm = pauli_povm(2)
    rng = np.random.default_rng(4)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    mixed = g @ g.conj().T
    mixed /= np.trace(mixed).real
    res = mle_reconstruct(povm.probabilities(mixed), povm)
    assert qcore.trace_distance(res.state, mixed) < 1e-4
    _assert_monotone(res)
    res = mle_reconstruct(povm.probabilities(qcore.PHI_PLUS_DM), povm)
    assert qcore.fidelity_to_pure(res.state, qcore.PHI_PLUS) >= 1 - 1e-6
    _assert_monotone(res)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mle_on_sampled_counts_is_monotone_and_valid(seed):
    povm = pauli_povm(1)
    rng = np.random.default_rng(seed)
    psi = qcore.haar_sample(2, rng)
    counts = rng.multinomial(300, povm.probabilities(qcore.dm(psi)).clip(0))
    res = mle_reconstruct(counts / counts.sum(), povm, max_iters=200)
    qcore.check_density(res.state)
    _assert_monotone(res)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2, 3]), st.sampled_from([1, 2, None]))
def test_mle_reaches_rank_deficient_optima(seed, n, rank):
    # random pure and low-rank states are where plain R rho R stalls
    rng = np.random.default_rng(seed)
    d = 2 ** n
    g = rng.standard_normal((d, rank or d)) + 1j * rng.standard_normal((d, rank or d))
    target = g @ g.conj().T / np.trace(g @ g.conj().T).real
    povm = pauli_povm(n)
    res = mle_reconstruct(povm.probabilities(target), povm)
    root = sqrtm(target)
    fid = np.real(np.trace(sqrtm(root @ res.state @ root))) ** 2
    assert fid >= 1 - 1e-6 and res.iterations <= 500
    _assert_monotone(res)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_stable_kl_matches_relative_entropy(seed):
    rng = np.random.default_rng(seed)
    f = rng.dirichlet(np.ones(6))
    f[rng.integers(6)] = 0.0
    f /= f.sum()
    p = rng.dirichlet(np.ones(6))
    assert verification._kl_divergence(f, p) == pytest.approx(float(np.sum(rel_entr(f, p))), abs=1e-12)


def test_mle_rejects_bad_frequencies():
    povm = pauli_povm(1)
    with pytest.raises(ValueError):
        mle_reconstruct(np.ones(6), povm)
    with pytest.raises(ValueError):
        mle_reconstruct(np.ones(5) / 5, povm)


# --------------------------------------------------------------- blindness

def test_binary_phase_first_moment_is_blind():
    res = blindness_experiment(EnsembleSpec.binary_phase(4), 1, 10_000, np.random.default_rng(0))
    assert res.report.delta == pytest.approx(0, abs=1e-15)
    assert abs(res.empirical_accuracy - 0.5) <= 3 * res.sigma
    assert abs(res.helstrom_accuracy - 0.5) <= 3 * res.sigma


def test_stabilizer_two_copies_are_blind():
    res = blindness_experiment(EnsembleSpec.stabilizer(), 2, 10_000, np.random.default_rng(1))
    assert res.report.delta <= 1e-10
    assert abs(res.empirical_accuracy - 0.5) <= 3 * res.sigma


def test_ensemble_against_itself():
    spec = EnsembleSpec.binary_phase(2)
    res = blindness_experiment(spec, 2, 4000, np.random.default_rng(2), reference=spec)
    assert res.report.delta == 0
    assert abs(res.empirical_accuracy - 0.5) <= 3 * res.sigma


def test_distinguishable_ensemble_stays_under_bound():
    # |Phi+> against Haar on C^4: the bound is far above 1/2 and both testers respect it
    res = blindness_experiment(EnsembleSpec.phi_plus(), 1, 4000, np.random.default_rng(3))
    assert res.report.delta == pytest.approx(0.75, abs=1e-12)
    assert res.helstrom_accuracy > 0.8
    assert res.empirical_accuracy <= res.report.p_detect + 3 * res.sigma


def test_bound_violation_is_raised(monkeypatch):
    real = verification.helstrom_advantage

    def understated(a, b):
        r = real(a, b)
        return verification.AdvantageReport(0.0, 0.5, r.k, r.d)

    monkeypatch.setattr(verification, "helstrom_advantage", understated)
    with pytest.raises(BoundViolation):
        blindness_experiment(EnsembleSpec.phi_plus(), 1, 2000, np.random.default_rng(3))


def test_blindness_row_columns():
    res = blindness_experiment(EnsembleSpec.stabilizer(), 1, 100, np.random.default_rng(0))
    assert tuple(res.row()) == verification.CSV_COLUMNS
