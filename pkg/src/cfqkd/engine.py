"""Vectorized Monte Carlo engine.

Runs the same round logic as :func:`cfqkd.protocol.run_round` on whole
shards of rounds with numpy masks.  It reads the same stream slots and the
same thresholds (taken from the quantum-module functions), so its columns
match the round-by-round reference exactly; the test suite checks this.

Shards have a fixed size independent of the worker count, and tallies are
summed in shard order, so results are identical for any ``workers``.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adversary import action_probabilities
from .config import Adversary, StrategyConfig
from .protocol import ClickStats
from .quantum import Outcome, PathState, Polarization, interfere_at_bs2, split_at_bs1
from .streams import (
    BIT_ALICE,
    BIT_BOB,
    BIT_EVE_BASIS,
    BIT_EVE_GUESS,
    U_CHECK,
    U_DETECTOR,
    U_EVE_ACTION,
    U_LOSS_AB,
    U_LOSS_BA,
    U_WHICH_PATH,
    round_words,
    take_bit,
    to_uniform,
)

SHARD_SIZE = 1 << 17

# path-state codes
SUP, IN_A, GONE = 0, 1, 2
# Eve action codes
NO_EVE, PASS, ATTACK, BLOCK = -1, 0, 1, 2

ACTION_NAMES = {NO_EVE: "-", PASS: "pass", ATTACK: "attack", BLOCK: "block"}


@dataclass
class Columns:
    index: np.ndarray
    alice: np.ndarray
    bob: np.ndarray
    loss_ab: np.ndarray
    loss_ba: np.ndarray
    action: np.ndarray
    eve_basis: np.ndarray
    d4: np.ndarray
    outcome: np.ndarray
    check: np.ndarray
    eve_bit: np.ndarray
    b_arrival: np.ndarray

    @property
    def sifted(self) -> np.ndarray:
        return self.outcome == Outcome.D1

    def __len__(self) -> int:
        return len(self.index)


def simulate_columns(cfg: StrategyConfig, start: int = 0, stop: int | None = None) -> Columns:
    stop = cfg.n_rounds if stop is None else stop
    n = stop - start
    w = round_words(cfg.seed, start, n)
    alice = take_bit(w[:, 0], BIT_ALICE)
    bob = take_bit(w[:, 0], BIT_BOB)
    eve_basis = take_bit(w[:, 0], BIT_EVE_BASIS)
    guess = take_bit(w[:, 0], BIT_EVE_GUESS)
    u_path = to_uniform(w[:, U_WHICH_PATH])
    u_ba = to_uniform(w[:, U_LOSS_BA])
    u_det = to_uniform(w[:, U_DETECTOR])

    pb = split_at_bs1(Polarization.V, cfg.R, cfg.T).p_path_b
    in_b = u_path < pb
    state = np.full(n, SUP, dtype=np.int8)
    action = np.full(n, NO_EVE, dtype=np.int8)
    d4 = np.zeros(n, dtype=bool)
    loss_ab = np.zeros(n, dtype=bool)

    if cfg.adversary is Adversary.NONE:
        loss_ab = to_uniform(w[:, U_LOSS_AB]) < cfg.eta
        state[loss_ab] = np.where(in_b[loss_ab], GONE, IN_A)
        b_arrival = ~loss_ab
    else:
        p_pass, p_attack, _ = action_probabilities(cfg)
        u_act = to_uniform(w[:, U_EVE_ACTION])
        action[:] = np.where(u_act < p_pass, PASS, np.where(u_act < p_pass + p_attack, ATTACK, BLOCK))
        hit = (action == ATTACK) & (eve_basis == alice)
        erased = hit | (action == BLOCK)
        state[erased] = np.where(in_b[erased], GONE, IN_A)
        d4 = hit & in_b
        b_arrival = ~erased

    loss_ba = u_ba < cfg.eta
    blocked = (state == SUP) & (bob == alice) & in_b
    state[(state == SUP) & (bob == alice) & ~in_b] = IN_A
    state[blocked] = GONE
    returning_lost = (state == SUP) & loss_ba
    state[returning_lost] = np.where(in_b[returning_lost], GONE, IN_A)

    dist_sup = interfere_at_bs2(split_at_bs1(Polarization.V, cfg.R, cfg.T), cfg.R)
    dist_a = interfere_at_bs2(PathState.in_path_a(Polarization.V), cfg.R)
    outcome = np.full(n, Outcome.NO_CLICK, dtype=np.int8)
    for code, dist in ((SUP, dist_sup), (IN_A, dist_a)):
        m = state == code
        outcome[m] = np.where(u_det[m] < dist[Outcome.D1], Outcome.D1, Outcome.D2)
    outcome[blocked] = Outcome.D3
    outcome[d4] = Outcome.D4

    sifted = outcome == Outcome.D1
    check = sifted & (to_uniform(w[:, U_CHECK]) < cfg.check_fraction)
    if cfg.adversary is Adversary.NONE:
        eve_bit = np.zeros(n, dtype=np.int8)
    else:
        eve_bit = np.where(action == ATTACK, 1 - eve_basis, guess).astype(np.int8)

    return Columns(
        index=np.arange(start, stop, dtype=np.int64),
        alice=alice,
        bob=bob,
        loss_ab=loss_ab,
        loss_ba=loss_ba,
        action=action,
        eve_basis=eve_basis,
        d4=d4,
        outcome=outcome,
        check=check,
        eve_bit=eve_bit,
        b_arrival=b_arrival,
    )


def tally(cols: Columns) -> ClickStats:
    stats = ClickStats()
    n_out = len(Outcome)
    stats.total = len(cols)
    stats.clicks = np.bincount(cols.outcome * 2 + cols.alice, minlength=2 * n_out).reshape(n_out, 2)
    match = (cols.alice == cols.bob).astype(np.int64)
    stats.by_match = np.bincount(cols.outcome * 2 + match, minlength=2 * n_out).reshape(n_out, 2)
    case = np.where(cols.loss_ab, 1, np.where(cols.loss_ba, 2, 0))
    sifted = cols.sifted
    stats.case_rounds = np.bincount(case, minlength=3)
    stats.case_sifted = np.bincount(case[sifted], minlength=3)
    stats.sifted = int(sifted.sum())
    stats.checked = int(cols.check.sum())
    key = sifted & ~cols.check
    cell = cols.alice[key].astype(np.int64) * 4 + cols.bob[key] * 2 + cols.eve_bit[key]
    stats.key_cells = np.bincount(cell, minlength=8).reshape(2, 2, 2)
    stats.b_arrivals = int(cols.b_arrival.sum())
    attacked = cols.action == ATTACK
    stats.attacks = int(attacked.sum())
    stats.blocks = int((cols.action == BLOCK).sum())
    stats.d4 = int(cols.d4.sum())
    ak = key & attacked
    stats.attacked_key = int(ak.sum())
    stats.attacked_key_eve_alice_same = int((cols.eve_bit[ak] == cols.alice[ak]).sum())
    return stats


def _shard(args: tuple[StrategyConfig, int, int]) -> ClickStats:
    cfg, start, stop = args
    return tally(simulate_columns(cfg, start, stop))


def shard_bounds(n_rounds: int, shard_size: int = SHARD_SIZE) -> list[tuple[int, int]]:
    return [(s, min(s + shard_size, n_rounds)) for s in range(0, n_rounds, shard_size)]


def simulate(cfg: StrategyConfig, workers: int = 1) -> ClickStats:
    """Run ``cfg.n_rounds`` rounds and return the merged tallies."""
    jobs = [(cfg, a, b) for a, b in shard_bounds(cfg.n_rounds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_shard, jobs))
    else:
        parts = [_shard(job) for job in jobs]
    total = ClickStats()
    for part in parts:
        total = total + part
    return total
