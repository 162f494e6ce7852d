"""Trapdoor verification: keystream-chosen CHSH settings scored pair by pair.

Measurement axes lie on the Bloch equator: axis ``phi`` measures
``cos(phi) X + sin(phi) Y`` with outcomes +-1.  Alice's input bit selects
0 or pi/2, Bob's selects 7pi/4 or pi/4; the round is won when the outcome
product is +1, except for inputs (1, 1) where -1 wins.  For Phi+ every
setting pair then has correlation magnitude 1/sqrt(2) with the winning sign,
giving the quantum optimum cos^2(pi/8).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from . import qcore
from .adversary import JammingSpec, jamming_state
from .keystream import KeystreamSeed

ALICE_AXES = (0.0, math.pi / 2)
BOB_AXES = (7 * math.pi / 4, math.pi / 4)
QUANTUM_WIN = math.cos(math.pi / 8) ** 2
CLASSICAL_WIN = 0.75
DEFAULT_THRESHOLD = (CLASSICAL_WIN + QUANTUM_WIN) / 2

CSV_COLUMNS = ("trial", "wins", "k", "win_rate", "accepted", "mode")


@dataclass(frozen=True)
class ChshSetting:
    alice_axis: float
    bob_axis: float
    pair_index: int

    @property
    def inputs(self) -> tuple[int, int]:
        return ALICE_AXES.index(self.alice_axis), BOB_AXES.index(self.bob_axis)


def setting_from_bits(x: int, y: int, pair_index: int) -> ChshSetting:
    return ChshSetting(ALICE_AXES[x], BOB_AXES[y], pair_index)


def keystream_settings(seed: KeystreamSeed, i: int) -> ChshSetting:
    """Setting pair for buffer position ``i``, chosen by two keystream bits."""
    if i < 0:
        raise ValueError("pair index must be nonnegative")
    x, y = _keystream_inputs(seed, i)
    return setting_from_bits(x, y, i)


def _keystream_inputs(seed: KeystreamSeed, i: int) -> tuple[int, int]:
    x, y = seed.bits("chsh-setting", i, 2)
    return int(x), int(y)


def _axis_projectors(phi: float) -> tuple[np.ndarray, np.ndarray]:
    plus = np.array([1.0, np.exp(1j * phi)]) / np.sqrt(2)
    minus = np.array([1.0, -np.exp(1j * phi)]) / np.sqrt(2)
    return qcore.dm(plus), qcore.dm(minus)


@functools.lru_cache(maxsize=4)
def _joint_projectors(x: int, y: int) -> np.ndarray:
    pa = _axis_projectors(ALICE_AXES[x])
    pb = _axis_projectors(BOB_AXES[y])
    out = np.array([np.kron(a, b) for a in pa for b in pb])
    out.setflags(write=False)
    return out


def outcome_distribution(state: np.ndarray, x: int, y: int) -> np.ndarray:
    """Joint Born probabilities ``[p(++), p(+-), p(-+), p(--)]``."""
    probs = np.einsum("nij,ji->n", _joint_projectors(x, y), state).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _win_table(state: np.ndarray) -> np.ndarray:
    """Per-input win probability, shape (2, 2)."""
    table = np.empty((2, 2))
    for x in (0, 1):
        for y in (0, 1):
            p = outcome_distribution(state, x, y)
            same = p[0] + p[3]
            table[x, y] = 1.0 - same if (x and y) else same
    return table


def win_probability(state: np.ndarray) -> float:
    """Exact per-round win probability under uniformly random inputs."""
    return float(_win_table(qcore.check_density(state)).mean())


def chsh_round(state: np.ndarray, setting: ChshSetting, rng: np.random.Generator) -> bool:
    """Sample one scored CHSH round on a two-qubit state."""
    state = qcore.check_density(state)
    x, y = setting.inputs
    cdf = np.cumsum(outcome_distribution(state, x, y))
    outcome = min(int(np.searchsorted(cdf, rng.random(), side="right")), 3)
    same = outcome in (0, 3)
    return (not same) if (x and y) else same


@dataclass(frozen=True)
class GameVerdict:
    wins: int
    k: int
    threshold: float

    @property
    def win_rate(self) -> float:
        return self.wins / self.k

    @property
    def accepted(self) -> bool:
        return self.win_rate >= self.threshold


def _check_threshold(threshold: float) -> None:
    if not CLASSICAL_WIN < threshold < QUANTUM_WIN:
        raise ValueError(
            f"threshold must lie in ({CLASSICAL_WIN}, {QUANTUM_WIN:.6f}), got {threshold}"
        )


def _play(state: np.ndarray, xs: np.ndarray, ys: np.ndarray, threshold: float,
          rng: np.random.Generator) -> GameVerdict:
    # the adversary's state is fixed before any setting is revealed
    table = _win_table(state)
    p_win = table[xs, ys]
    wins = int(np.count_nonzero(rng.random(len(xs)) < p_win))
    return GameVerdict(wins, len(xs), threshold)


def trapdoor_game(seed: KeystreamSeed, k: int, adversary: np.ndarray,
                  threshold: float = DEFAULT_THRESHOLD,
                  rng: np.random.Generator | None = None) -> GameVerdict:
    """Run ``k`` scored rounds with keystream settings; accept on the win rate.

    Rounds are independent given the fixed per-pair state, so each is sampled
    as a Bernoulli draw with the exact Born-rule win probability for its
    setting, in pair order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    _check_threshold(threshold)
    if rng is None:
        raise ValueError("trapdoor_game needs an rng for measurement outcomes")
    state = qcore.check_density(adversary)
    bits = np.array([_keystream_inputs(seed, i) for i in range(k)])
    return _play(state, bits[:, 0], bits[:, 1], threshold, rng)


def ideal_game(k: int, adversary: np.ndarray, threshold: float,
               rng: np.random.Generator) -> GameVerdict:
    """Same game with truly random settings drawn from ``rng``."""
    _check_threshold(threshold)
    state = qcore.check_density(adversary)
    xs = rng.integers(0, 2, size=k)
    ys = rng.integers(0, 2, size=k)
    return _play(state, xs, ys, threshold, rng)


@dataclass(frozen=True)
class HybridResult:
    rate_real: float
    rate_ideal: float
    trials: int
    real: tuple[GameVerdict, ...]
    ideal: tuple[GameVerdict, ...]

    @property
    def difference(self) -> float:
        return self.rate_real - self.rate_ideal

    @property
    def half_width(self) -> float:
        """3 sigma of the pooled two-proportion difference estimator."""
        pooled = 0.5 * (self.rate_real + self.rate_ideal)
        return 3.0 * math.sqrt(2.0 * pooled * (1.0 - pooled) / self.trials)

    @property
    def consistent(self) -> bool:
        return abs(self.difference) <= self.half_width

    def rows(self) -> list[dict]:
        out = []
        for mode, games in (("real", self.real), ("ideal", self.ideal)):
            for t, g in enumerate(games):
                out.append({"trial": t, "wins": g.wins, "k": g.k, "win_rate": g.win_rate,
                            "accepted": g.accepted, "mode": mode})
        return out


def run_games(seed: KeystreamSeed, k: int, adversary: np.ndarray, trials: int,
              threshold: float, rng: np.random.Generator) -> list[GameVerdict]:
    """``trials`` independent real games, each under its own derived key."""
    return [trapdoor_game(seed.derive(f"game/{t}"), k, adversary, threshold, rng)
            for t in range(trials)]


def hybrid_compare(seed: KeystreamSeed, k: int, adversary: np.ndarray, trials: int,
                   rng: np.random.Generator, threshold: float = DEFAULT_THRESHOLD,
                   ideal_rng: np.random.Generator | None = None) -> HybridResult:
    """Pass rates of the keystream game against the truly-random-settings game."""
    if trials < 100:
        raise ValueError("hybrid comparison needs at least 100 trials")
    ideal_rng = ideal_rng if ideal_rng is not None else rng
    real = run_games(seed, k, adversary, trials, threshold, rng)
    ideal = [ideal_game(k, adversary, threshold, ideal_rng) for _ in range(trials)]
    return HybridResult(pass_rate(real), pass_rate(ideal), trials, tuple(real), tuple(ideal))


def pass_rate(games) -> float:
    return sum(g.accepted for g in games) / len(games)


def pass_probability(state: np.ndarray, k: int, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Exact acceptance probability of a k-pair game under uniform settings.

    Wins are i.i.d. Bernoulli with the averaged win probability, so this is a
    binomial upper tail.
    """
    p = win_probability(state)
    need = math.ceil(threshold * k - 1e-12)
    return float(binom.sf(need - 1, k, p))


# --------------------------------------------------------------------------- #
#                            adversary library                                #
# --------------------------------------------------------------------------- #

def adversary_state(name: str) -> np.ndarray:
    """Named per-pair adversary: separable, singlet, aligned, mixed or jam:<eta>.

    ``aligned`` is the product state |+>|+>, the best separable choice for
    these four setting pairs when their order is unknown.
    """
    if name == "separable":
        return qcore.SEP_00_DM.copy()
    if name == "singlet":
        return qcore.PHI_PLUS_DM.copy()
    if name == "aligned":
        plus = np.array([1.0, 1.0]) / np.sqrt(2)
        return qcore.dm(np.kron(plus, plus))
    if name == "mixed":
        return qcore.maximally_mixed(4)
    if name.startswith("jam:"):
        return jamming_state(JammingSpec(float(name[4:])))
    raise ValueError(f"unknown adversary {name!r}")
