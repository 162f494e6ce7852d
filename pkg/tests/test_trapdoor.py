import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jamlab import qcore, trapdoor
from jamlab.keystream import KeystreamSeed
from jamlab.trapdoor import (
    DEFAULT_THRESHOLD,
    QUANTUM_WIN,
    GameVerdict,
    adversary_state,
    chsh_round,
    hybrid_compare,
    ideal_game,
    keystream_settings,
    pass_probability,
    setting_from_bits,
    trapdoor_game,
    win_probability,
)

SEED = KeystreamSeed.from_hex("0f1e2d3c4b5a69788796a5b4c3d2e1f0")
OTHER = KeystreamSeed.from_hex("ffeeddccbbaa99887766554433221100")


def correlation_oracle(state, a, b):
    """<A(a) (x) B(b)> from Pauli expectation values, A(phi) = cos(phi) X + sin(phi) Y."""
    x = np.array([[0, 1], [1, 0]])
    y = np.array([[0, -1j], [1j, 0]])
    op_a = np.cos(a) * x + np.sin(a) * y
    op_b = np.cos(b) * x + np.sin(b) * y
    return float(np.trace(np.kron(op_a, op_b) @ state).real)


def win_oracle(state):
    total = 0.0
    for xa, a in enumerate(trapdoor.ALICE_AXES):
        for yb, b in enumerate(trapdoor.BOB_AXES):
            e = correlation_oracle(state, a, b)
            total += (1 - e) / 2 if (xa and yb) else (1 + e) / 2
    return total / 4


# ---------------------------------------------------------------- settings

def test_settings_are_deterministic_and_canonical():
    assert keystream_settings(SEED, 17) == keystream_settings(SEED, 17)
    for i in range(50):
        s = keystream_settings(SEED, i)
        assert s.alice_axis in trapdoor.ALICE_AXES and s.bob_axis in trapdoor.BOB_AXES
        assert 0 <= s.alice_axis < 2 * math.pi and 0 <= s.bob_axis < 2 * math.pi
        assert s.pair_index == i


def test_settings_are_uniform_over_four_pairs():
    counts = Counter(keystream_settings(SEED, i).inputs for i in range(10_000))
    assert len(counts) == 4
    sigma = math.sqrt(10_000 * 0.25 * 0.75)
    for c in counts.values():
        assert abs(c - 2500) <= 3 * sigma


def test_distinct_seeds_give_different_sequences():
    diff = sum(keystream_settings(SEED, i).inputs != keystream_settings(OTHER, i).inputs
               for i in range(1000))
    assert diff >= 400


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        keystream_settings(SEED, -1)


# ------------------------------------------------------------ win statistics

@pytest.mark.parametrize("name", ["singlet", "separable", "aligned", "mixed", "jam:0.3"])
def test_win_probability_matches_correlation_oracle(name):
    rho = adversary_state(name)
    assert win_probability(rho) == pytest.approx(win_oracle(rho), abs=1e-12)


def test_known_win_probabilities():
    assert win_probability(qcore.PHI_PLUS_DM) == pytest.approx(math.cos(math.pi / 8) ** 2, abs=1e-12)
    assert win_probability(qcore.SEP_00_DM) == pytest.approx(0.5, abs=1e-12)
    assert win_probability(adversary_state("aligned")) == pytest.approx(0.5 + math.sqrt(2) / 8, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_product_states_never_beat_the_classical_bound(seed):
    rng = np.random.default_rng(seed)
    a, b = qcore.haar_sample(2, rng), qcore.haar_sample(2, rng)
    assert win_probability(qcore.dm(np.kron(a, b))) <= 0.75


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_no_state_beats_the_quantum_bound(seed):
    rng = np.random.default_rng(seed)
    psi = qcore.haar_sample(4, rng)
    assert win_probability(qcore.dm(psi)) <= QUANTUM_WIN + 1e-12


def _sampled_rate(state, n, seed):
    rng = np.random.default_rng(seed)
    wins = 0
    for i in range(n):
        x, y = rng.integers(0, 2, size=2)
        wins += chsh_round(state, setting_from_bits(int(x), int(y), i), rng)
    return wins / n


def test_chsh_round_singlet_rate():
    n = 100_000
    rate = _sampled_rate(qcore.PHI_PLUS_DM, n, 1)
    p = math.cos(math.pi / 8) ** 2
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_chsh_round_separable_and_mixed_rates():
    n = 20_000
    sigma = 0.5 / math.sqrt(n)
    assert _sampled_rate(qcore.SEP_00_DM, n, 2) <= 0.75 + 3 * sigma
    assert abs(_sampled_rate(np.eye(4) / 4, n, 3) - 0.5) <= 3 * sigma


# ------------------------------------------------------------------- games

def test_verdict_rule():
    g = GameVerdict(205, 256, 0.8)
    assert g.win_rate == 205 / 256 and g.accepted
    assert not GameVerdict(204, 256, 0.8).accepted


def _game_rate(state, k, games, seed=0):
    rng = np.random.default_rng(seed)
    return trapdoor.pass_rate(trapdoor.run_games(SEED, k, state, games, 0.80, rng))


def test_singlet_passes_and_separable_fails_at_256():
    assert _game_rate(qcore.PHI_PLUS_DM, 256, 200) >= 0.99
    assert _game_rate(qcore.SEP_00_DM, 256, 200) <= 0.05


def test_single_pair_singlet_acceptance():
    n = 20_000
    rate = _game_rate(qcore.PHI_PLUS_DM, 1, n, seed=5)
    p = math.cos(math.pi / 8) ** 2
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_threshold_must_separate_classical_and_quantum():
    rng = np.random.default_rng(0)
    for bad in (0.75, 0.9):
        with pytest.raises(ValueError):
            trapdoor_game(SEED, 10, qcore.PHI_PLUS_DM, bad, rng)


def test_games_are_deterministic():
    a = trapdoor_game(SEED, 64, adversary_state("aligned"), rng=np.random.default_rng(9))
    b = trapdoor_game(SEED, 64, adversary_state("aligned"), rng=np.random.default_rng(9))
    assert a == b


def test_pass_probability_matches_binomial_sum():
    p = win_probability(qcore.PHI_PLUS_DM)
    for k in (1, 16, 64):
        need = math.ceil(DEFAULT_THRESHOLD * k)
        brute = sum(math.comb(k, w) * p ** w * (1 - p) ** (k - w) for w in range(need, k + 1))
        assert pass_probability(qcore.PHI_PLUS_DM, k) == pytest.approx(brute, rel=1e-10)


def test_exact_separable_pass_probability_decays():
    probs = [pass_probability(qcore.SEP_00_DM, k) for k in (16, 64, 256)]
    assert probs[0] > probs[1] > probs[2]
    slope = np.polyfit([16, 64, 256], np.log(probs), 1)[0]
    assert slope < 0


# ------------------------------------------------------------------ hybrid

def test_hybrid_separable():
    res = hybrid_compare(SEED, 64, qcore.SEP_00_DM, 500, np.random.default_rng(1), 0.80)
    assert res.consistent


def test_hybrid_singlet():
    res = hybrid_compare(SEED, 256, qcore.PHI_PLUS_DM, 200, np.random.default_rng(2), 0.80)
    assert res.rate_real >= 0.99 and res.rate_ideal >= 0.99
    assert res.consistent


def test_hybrid_aligned_adversary_stays_under_hoeffding():
    k, t = 64, 0.80
    res = hybrid_compare(SEED, k, adversary_state("aligned"), 500, np.random.default_rng(3), t)
    p = win_probability(adversary_state("aligned"))
    hoeffding = math.exp(-2 * k * (t - p) ** 2)
    sigma = math.sqrt(hoeffding * (1 - hoeffding) / 500)
    assert res.rate_real <= hoeffding + 3 * sigma
    assert res.consistent


def test_hybrid_requires_enough_trials():
    with pytest.raises(ValueError):
        hybrid_compare(SEED, 8, qcore.PHI_PLUS_DM, 50, np.random.default_rng(0))


def test_ideal_game_win_rate():
    g = ideal_game(4000, qcore.PHI_PLUS_DM, 0.8, np.random.default_rng(0))
    assert g.k == 4000
    assert abs(g.win_rate - QUANTUM_WIN) <= 3 * math.sqrt(QUANTUM_WIN * (1 - QUANTUM_WIN) / 4000)


def test_adversary_library():
    for name in ("separable", "singlet", "aligned", "mixed", "jam:0.5"):
        qcore.check_density(adversary_state(name))
    with pytest.raises(ValueError):
        adversary_state("bogus")
