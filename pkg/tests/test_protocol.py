import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from cfqkd import analysis as an
from cfqkd.config import Adversary, StrategyConfig
from cfqkd.engine import SHARD_SIZE, simulate, simulate_columns, tally
from cfqkd.errors import EmptyKeyError, InvalidParameterError
from cfqkd.protocol import (
    CASE_I,
    CASE_II,
    CASE_III,
    ClickStats,
    RoundRecord,
    aggregate_stats,
    key_mismatch_rate,
    run_experiment,
    run_round,
    sift,
)
from cfqkd.quantum import Outcome, Polarization
from cfqkd.streams import RoundStream, derive_seed, round_words, to_uniform

N = 1_000_000
GRID = [round(0.1 * k, 10) for k in range(11)]


def within(k, n, p, sigmas=5.0):
    sd = math.sqrt(p * (1.0 - p) / n)
    return abs(k / n - p) <= sigmas * sd if sd else k / n == p


# --- streams ---------------------------------------------------------------

def test_round_words_are_position_independent():
    whole = round_words(11, 0, 40)
    assert np.array_equal(round_words(11, 17, 5), whole[17:22])
    assert RoundStream.for_round(11, 23).words == tuple(int(w) for w in whole[23])


def test_round_words_depend_on_seed():
    assert not np.array_equal(round_words(1, 0, 4), round_words(2, 0, 4))


def test_uniform_range():
    u = to_uniform(np.array([0, 2**64 - 1], dtype=np.uint64))
    assert u[0] == 0.0 and u[1] < 1.0


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, 1, k) for k in range(50)}) == 50


# --- config ------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(R=0.5, T=0.6),
    dict(R=0.0, T=1.0),
    dict(eta=1.2),
    dict(eta=0.5, adversary="s1"),
    dict(eta=0.4, adversary="s2"),
    dict(n_rounds=0),
    dict(seed=-1),
    dict(seed=2**64),
    dict(check_fraction=1.5),
])
def test_config_rejects(kwargs):
    with pytest.raises(InvalidParameterError):
        StrategyConfig(**kwargs)


def test_auto_adversary():
    assert Adversary.auto(0.49) is Adversary.STRATEGY_I
    assert Adversary.auto(0.5) is Adversary.STRATEGY_II


# --- single rounds -----------------------------------------------------------

def _stream(alice, bob, u=0.0, u_ab=0.99, u_ba=0.99, u_det=0.0, index=0):
    words = [0] * 8
    words[0] = alice | (bob << 1)
    for slot, value in ((1, u_ab), (2, u_ba), (3, u), (4, u_det), (5, 0.0), (6, 0.99)):
        words[slot] = int(value * 2**53) << 11
    return RoundStream(index, tuple(words))


def test_ideal_mismatch_gives_d2():
    cfg = StrategyConfig(eta=0.0)
    for u in (0.0, 0.3, 0.7, 0.999):
        for u_det in (0.0, 0.5, 0.999):
            rec = run_round(cfg, 0, stream=_stream(0, 1, u=u, u_det=u_det))
            assert rec.outcome is Outcome.D2 and rec.outcome_pol is Polarization.V


def test_ideal_match_branches():
    cfg = StrategyConfig(eta=0.0)
    assert run_round(cfg, 0, stream=_stream(1, 1, u=0.2)).outcome is Outcome.D3
    assert run_round(cfg, 0, stream=_stream(1, 1, u=0.7, u_det=0.2)).outcome is Outcome.D1
    assert run_round(cfg, 0, stream=_stream(1, 1, u=0.7, u_det=0.7)).outcome is Outcome.D2


def test_blocked_round_skips_return_loss():
    # the return segment only matters while a path-b component is in flight
    cfg = StrategyConfig(eta=0.5)
    rec = run_round(cfg, 0, stream=_stream(0, 0, u=0.2, u_ba=0.1))
    assert rec.outcome is Outcome.D3 and rec.loss_ba and not rec.loss_ab
    # a collapsed photon in path a is untouched by the return loss
    rec = run_round(cfg, 0, stream=_stream(0, 0, u=0.7, u_ba=0.1, u_det=0.2))
    assert rec.outcome is Outcome.D1


def test_return_loss_collapses_superposition():
    cfg = StrategyConfig(eta=0.5)
    assert run_round(cfg, 0, stream=_stream(0, 1, u=0.2, u_ba=0.1)).outcome is Outcome.NO_CLICK
    assert run_round(cfg, 0, stream=_stream(0, 1, u=0.7, u_ba=0.1, u_det=0.2)).outcome is Outcome.D1
    assert run_round(cfg, 0, stream=_stream(0, 1, u=0.2, u_ab=0.1)).outcome is Outcome.NO_CLICK


def test_record_properties():
    rec = RoundRecord(3, Polarization.H, Polarization.V, False, True, Outcome.D1, Polarization.H)
    assert rec.alice_bit == 1 and rec.bob_bit == 0 and rec.sifted and rec.case == CASE_III
    assert rec.eve_action is None and not rec.d4_clicked


@pytest.mark.parametrize("eta", [0.0, 1.0])
def test_round_distribution_matches_enumeration(eta):
    # exact per-outcome probabilities from the oracle, checked at 5 sigma
    cfg = StrategyConfig(eta=eta, n_rounds=200_000, seed=5)
    stats = simulate(cfg)
    dist = oracle.enumerate_round(Fraction(1, 2), Fraction(eta).limit_denominator())
    for outcome, code in (("D1", Outcome.D1), ("D2", Outcome.D2), ("D3", Outcome.D3), ("none", Outcome.NO_CLICK)):
        p = float(oracle.prob(dist, lambda ev: ev.outcome == outcome))
        assert within(int(stats.clicks[code].sum()), stats.total, p)


def test_total_loss_example():
    dist = oracle.enumerate_round(Fraction(1, 2), 1)
    for bob in (0, 1):
        given_bob = lambda ev, b=bob: ev.bob == b  # noqa: E731
        assert oracle.cond(dist, lambda ev: ev.outcome == "D1", given_bob) == Fraction(1, 4)
        assert oracle.cond(dist, lambda ev: ev.outcome == "D2", given_bob) == Fraction(1, 4)
        assert oracle.cond(dist, lambda ev: ev.outcome == "none", given_bob) == Fraction(1, 2)


# --- engine against the round-by-round reference ------------------------------

CONFIGS = [
    StrategyConfig(eta=0.0, n_rounds=3000, seed=1),
    StrategyConfig(eta=0.37, n_rounds=3000, seed=2),
    StrategyConfig(eta=1.0, n_rounds=3000, seed=3),
    StrategyConfig(eta=0.3, adversary="s1", n_rounds=3000, seed=4),
    StrategyConfig(eta=0.8, adversary="s2", n_rounds=3000, seed=5),
    StrategyConfig(eta=0.5, adversary="s2", n_rounds=3000, seed=6),
    StrategyConfig(eta=0.2, adversary="forced", n_rounds=3000, seed=7),
    StrategyConfig.symmetric(0.3, eta=0.6, adversary="s2", n_rounds=3000, seed=8, check_fraction=0.25),
    StrategyConfig.symmetric(0.8, eta=0.1, adversary="s1", n_rounds=3000, seed=9, inject_fault=True),
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.adversary.value}-eta{c.eta}-R{c.R}")
def test_engine_matches_reference(cfg):
    records = run_experiment(cfg)
    cols = simulate_columns(cfg)
    assert [int(r.outcome) for r in records] == cols.outcome.tolist()
    assert [r.alice_bit for r in records] == cols.alice.tolist()
    assert [r.bob_bit for r in records] == cols.bob.tolist()
    assert [r.loss_ab for r in records] == cols.loss_ab.tolist()
    assert [r.loss_ba for r in records] == cols.loss_ba.tolist()
    assert [r.check for r in records] == cols.check.tolist()
    assert [r.d4_clicked for r in records] == cols.d4.tolist()
    assert aggregate_stats(records) == tally(cols)


def test_reference_shards_compose():
    cfg = CONFIGS[3]
    whole = run_experiment(cfg)
    parts = run_experiment(cfg, 0, 1234) + run_experiment(cfg, 1234, cfg.n_rounds)
    assert whole == parts


def test_determinism_across_workers():
    cfg = StrategyConfig(eta=0.3, adversary="s1", n_rounds=3 * SHARD_SIZE + 17, seed=99)
    one = simulate(cfg, workers=1)
    assert one == simulate(cfg, workers=1)
    assert one == simulate(cfg, workers=3)


def test_record_invariants():
    for cfg in CONFIGS:
        for rec in run_experiment(cfg):
            if rec.outcome is Outcome.D1:
                assert rec.outcome_pol is rec.alice_pol
            assert rec.sifted == (rec.outcome is Outcome.D1)
            if rec.d4_clicked:
                assert rec.eve_action.kind.value == "attack"


def test_clickstats_counts_are_consistent():
    stats = simulate(StrategyConfig(eta=0.4, adversary="s1", n_rounds=50_000, seed=3, check_fraction=0.1))
    assert stats.clicks.sum() == stats.total == stats.case_rounds.sum() == stats.by_match.sum()
    assert (stats.clicks >= 0).all()
    assert stats.sifted == int(stats.clicks[Outcome.D1].sum())
    assert stats.key_length + stats.checked == stats.sifted
    assert ClickStats().total == 0 and ClickStats() + stats == stats


# --- sifting -----------------------------------------------------------------

def test_sift_examples():
    assert sift([]) == ([], [], [])
    d2 = RoundRecord(0, Polarization.V, Polarization.H, False, False, Outcome.D2, Polarization.V)
    assert sift([d2]) == ([], [], [])
    d1 = RoundRecord(4, Polarization.H, Polarization.H, False, False, Outcome.D1, Polarization.H)
    checked = RoundRecord(5, Polarization.H, Polarization.V, False, False, Outcome.D1, Polarization.H, check=True)
    assert sift([checked, d1, d2]) == ([1], [1], [4])


def test_key_mismatch_rate_examples():
    assert key_mismatch_rate([0, 1, 1], [0, 1, 1]) == 0.0
    assert key_mismatch_rate([0, 1], [1, 1]) == 0.5
    with pytest.raises(EmptyKeyError):
        key_mismatch_rate([], [])
    with pytest.raises(InvalidParameterError):
        key_mismatch_rate([0], [0, 1])


def test_ideal_run_has_no_errors():
    records = run_experiment(StrategyConfig(eta=0.0, n_rounds=20_000, seed=12))
    alice, bob, _ = sift(records)
    assert key_mismatch_rate(alice, bob) == 0.0


def test_half_loss_key_length_and_errors():
    stats = simulate(StrategyConfig(eta=0.5, n_rounds=N, seed=21))
    assert within(stats.key_length, N, 0.21875, 3.0)
    assert within(stats.key_mismatches, stats.key_length, 3 / 7, 3.0)


def test_ideal_d3_rate():
    stats = simulate(StrategyConfig(eta=0.0, n_rounds=N, seed=22))
    assert within(int(stats.clicks[Outcome.D3].sum()), N, 0.25, 3.0)


# --- rate identities over the grid (5 sigma) ---------------------------------

@pytest.fixture(scope="module")
def honest_grid():
    return {eta: simulate(StrategyConfig(eta=eta, n_rounds=N, seed=derive_seed(31, k))) for k, eta in enumerate(GRID)}


def test_raw_rate_identity(honest_grid):
    for eta, s in honest_grid.items():
        assert within(s.sifted, s.total, an.raw_key_rate(eta, 0.5, 0.5)), eta


def test_mismatch_identity(honest_grid):
    for eta, s in honest_grid.items():
        assert within(s.key_mismatches, s.key_length, an.ab_joint(eta).diff), eta


def test_case_decomposition(honest_grid):
    p = an.case_probabilities(0.5, 0.5)
    for eta, s in honest_grid.items():
        for case in (CASE_I, CASE_II, CASE_III):
            if s.case_rounds[case]:
                assert within(int(s.case_sifted[case]), int(s.case_rounds[case]), p[case]), (eta, case)


def test_enumeration_matches_closed_forms():
    for k in range(11):
        eta = Fraction(k, 10)
        dist = oracle.enumerate_round(Fraction(1, 2), eta)
        assert sum(dist.values()) == 1
        assert float(oracle.prob(dist, oracle.sifted)) == pytest.approx(an.raw_key_rate(float(eta), 0.5, 0.5), abs=1e-15)
        mismatch = oracle.cond(dist, lambda ev: ev.alice != ev.bob, oracle.sifted)
        assert float(mismatch) == pytest.approx(an.ab_joint(float(eta)).diff, abs=1e-15)
        case_of = lambda ev: CASE_II if ev.loss_ab else (CASE_III if ev.loss_ba else CASE_I)  # noqa: E731
        for case, p in zip((CASE_I, CASE_II, CASE_III), an.case_probabilities(0.5, 0.5)):
            given_case = lambda ev, c=case: case_of(ev) == c  # noqa: E731
            if oracle.prob(dist, given_case):
                assert float(oracle.cond(dist, oracle.sifted, given_case)) == pytest.approx(p, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**64 - 1), st.sampled_from(CONFIGS))
def test_same_seed_same_records(seed, cfg):
    cfg = cfg.with_(seed=seed, n_rounds=200)
    assert run_experiment(cfg) == run_experiment(cfg)
