"""Honest protocol rounds, sifting and click bookkeeping.

One round: Alice's source -> BS1 -> segment A->B (or Eve) -> Bob's PBS ->
segment B->A -> BS2 -> detectors.  Loss on each segment is an independent
Bernoulli(eta) event.  The B->A loss flag is drawn on every round so the
per-case counters follow the channel events, but it only acts on a path-b
component that is actually travelling back.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .adversary import ActionKind, Eavesdropper, EveAction, EveRoundLog
from .config import Adversary, StrategyConfig
from .errors import EmptyKeyError, InvalidParameterError
from .quantum import (
    Outcome,
    PathState,
    Polarization,
    erase_path_b,
    interfere_at_bs2,
    pbs_interact,
    split_at_bs1,
)
from .streams import (
    BIT_ALICE,
    BIT_BOB,
    U_CHECK,
    U_DETECTOR,
    U_LOSS_AB,
    U_LOSS_BA,
    U_WHICH_PATH,
    RoundStream,
    round_words,
)

EveHook = Callable[[PathState, RoundStream], "tuple[PathState, EveRoundLog]"]

CASE_I, CASE_II, CASE_III = 0, 1, 2


@dataclass(frozen=True)
class RoundRecord:
    index: int
    alice_pol: Polarization
    bob_basis: Polarization
    loss_ab: bool
    loss_ba: bool
    outcome: Outcome
    outcome_pol: Polarization | None
    check: bool = False
    eve_log: EveRoundLog | None = None

    @property
    def alice_bit(self) -> int:
        return int(self.alice_pol)

    @property
    def bob_bit(self) -> int:
        return int(self.bob_basis)

    @property
    def sifted(self) -> bool:
        return self.outcome is Outcome.D1

    @property
    def eve_action(self) -> EveAction | None:
        return None if self.eve_log is None else self.eve_log.action

    @property
    def d4_clicked(self) -> bool:
        return self.eve_log is not None and self.eve_log.d4_clicked

    @property
    def case(self) -> int:
        if self.loss_ab:
            return CASE_II
        return CASE_III if self.loss_ba else CASE_I


def default_hook(cfg: StrategyConfig) -> EveHook | None:
    return None if cfg.adversary is Adversary.NONE else Eavesdropper(cfg)


def run_round(
    cfg: StrategyConfig,
    index: int,
    eve: EveHook | None = None,
    stream: RoundStream | None = None,
) -> RoundRecord:
    """Play one photon through the interferometer.

    ``eve`` replaces the Alice-to-Bob segment when given.  ``stream``
    defaults to the round's own stream derived from ``cfg.seed``.
    """
    if stream is None:
        stream = RoundStream.for_round(cfg.seed, index)
    alice = Polarization.from_bit(stream.bit(BIT_ALICE))
    bob = Polarization.from_bit(stream.bit(BIT_BOB))
    u_path = stream.uniform(U_WHICH_PATH)

    state = split_at_bs1(alice, cfg.R, cfg.T)
    log = None
    loss_ab = False
    if eve is not None:
        state, log = eve(state, stream)
    else:
        loss_ab = stream.uniform(U_LOSS_AB) < cfg.eta
        if loss_ab:
            state = erase_path_b(state, u_path)
    loss_ba = stream.uniform(U_LOSS_BA) < cfg.eta

    if log is not None and log.d4_clicked:
        outcome, pol = Outcome.D4, None
    else:
        blocked = False
        if not state.is_gone:
            state, blocked = pbs_interact(state, bob, u_path)
        if blocked:
            outcome, pol = Outcome.D3, state.pol
        else:
            if loss_ba and state.has_path_b:
                state = erase_path_b(state, u_path)
            dist = interfere_at_bs2(state, cfg.R)
            outcome = dist.sample(stream.uniform(U_DETECTOR))
            pol = dist.pol if outcome in (Outcome.D1, Outcome.D2) else None

    check = outcome is Outcome.D1 and stream.uniform(U_CHECK) < cfg.check_fraction
    return RoundRecord(index, alice, bob, loss_ab, loss_ba, outcome, pol, check, log)


def run_experiment(cfg: StrategyConfig, start: int = 0, stop: int | None = None) -> list[RoundRecord]:
    """Round-by-round reference simulation of rounds ``start .. stop-1``."""
    stop = cfg.n_rounds if stop is None else stop
    eve = default_hook(cfg)
    words = round_words(cfg.seed, start, stop - start)
    return [
        run_round(cfg, start + k, eve, RoundStream.from_words(start + k, row))
        for k, row in enumerate(words)
    ]


def sift(records: Iterable[RoundRecord]) -> tuple[list[int], list[int], list[int]]:
    """Raw keys from announced D1 clicks, excluding rounds reserved for checking."""
    alice, bob, announced = [], [], []
    for rec in sorted(records, key=lambda r: r.index):
        if rec.sifted and not rec.check:
            alice.append(rec.alice_bit)
            bob.append(rec.bob_bit)
            announced.append(rec.index)
    return alice, bob, announced


def key_mismatch_rate(alice_key: Sequence[int], bob_key: Sequence[int]) -> float:
    if len(alice_key) != len(bob_key):
        raise InvalidParameterError("keys differ in length")
    if not alice_key:
        raise EmptyKeyError("mismatch rate of an empty key")
    return sum(a != b for a, b in zip(alice_key, bob_key)) / len(alice_key)


def _zeros(*shape):
    return np.zeros(shape, dtype=np.int64)


@dataclass
class ClickStats:
    """Integer tallies of one experiment; merging shards is plain addition.

    ``clicks[outcome, pol]`` is indexed by Alice's source polarization
    (equal to the click polarization whenever a detector fires).
    ``by_match[outcome, m]`` splits by whether Bob's basis equals Alice's.
    ``key_cells[a, b, e]`` counts key rounds by Alice's, Bob's and Eve's
    bits; the Eve axis is only meaningful when an adversary ran.
    """

    total: int = 0
    clicks: np.ndarray = field(default_factory=lambda: _zeros(len(Outcome), 2))
    by_match: np.ndarray = field(default_factory=lambda: _zeros(len(Outcome), 2))
    case_rounds: np.ndarray = field(default_factory=lambda: _zeros(3))
    case_sifted: np.ndarray = field(default_factory=lambda: _zeros(3))
    sifted: int = 0
    checked: int = 0
    key_cells: np.ndarray = field(default_factory=lambda: _zeros(2, 2, 2))
    b_arrivals: int = 0
    attacks: int = 0
    blocks: int = 0
    d4: int = 0
    attacked_key: int = 0
    attacked_key_eve_alice_same: int = 0

    _ARRAYS = ("clicks", "by_match", "case_rounds", "case_sifted", "key_cells")
    _SCALARS = ("total", "sifted", "checked", "b_arrivals", "attacks", "blocks", "d4",
                "attacked_key", "attacked_key_eve_alice_same")

    def __add__(self, other: "ClickStats") -> "ClickStats":
        out = ClickStats()
        for name in self._ARRAYS:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        for name in self._SCALARS:
            setattr(out, name, int(getattr(self, name) + getattr(other, name)))
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClickStats):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self._ARRAYS) and all(
            getattr(self, n) == getattr(other, n) for n in self._SCALARS
        )

    @property
    def key_length(self) -> int:
        return int(self.key_cells.sum())

    @property
    def key_mismatches(self) -> int:
        c = self.key_cells
        return int(c[0, 1].sum() + c[1, 0].sum())

    def observables(self) -> dict[str, tuple[int, int]]:
        """Statistics visible to Alice and Bob as ``name -> (count, trials)``.

        A D4 click is invisible to them and counts as no click.
        """
        out = {}
        for outcome in (Outcome.D1, Outcome.D2, Outcome.D3):
            for pol in Polarization:
                out[f"{outcome.name}_{pol.name}"] = (int(self.clicks[outcome, pol]), self.total)
        silent = int(self.clicks[Outcome.NO_CLICK].sum() + self.clicks[Outcome.D4].sum())
        out["no_click"] = (silent, self.total)
        out["sifted"] = (self.sifted, self.total)
        out["mismatch"] = (self.key_mismatches, self.key_length)
        return out


def aggregate_stats(records: Iterable[RoundRecord]) -> ClickStats:
    stats = ClickStats()
    for rec in records:
        stats.total += 1
        stats.clicks[rec.outcome, rec.alice_pol] += 1
        stats.by_match[rec.outcome, int(rec.alice_pol == rec.bob_basis)] += 1
        stats.case_rounds[rec.case] += 1
        log = rec.eve_log
        attacked = log is not None and log.action.kind is ActionKind.ATTACK
        if log is not None:
            stats.attacks += attacked
            stats.blocks += log.action.kind is ActionKind.BLOCK
            stats.d4 += log.d4_clicked
        if _path_b_reaches_bob(rec):
            stats.b_arrivals += 1
        if rec.sifted:
            stats.sifted += 1
            stats.case_sifted[rec.case] += 1
            if rec.check:
                stats.checked += 1
                continue
            eve_bit = 0
            if log is not None:
                eve_bit = log.guess_bit if log.provisional_bit is None else log.provisional_bit
            stats.key_cells[rec.alice_bit, rec.bob_bit, eve_bit] += 1
            if attacked:
                stats.attacked_key += 1
                stats.attacked_key_eve_alice_same += eve_bit == rec.alice_bit
    return stats


def _path_b_reaches_bob(rec: RoundRecord) -> bool:
    # a path-b component reaches Bob unless the A->B leg removed it
    if rec.eve_log is None:
        return not rec.loss_ab
    action = rec.eve_log.action
    if action.kind is ActionKind.PASS:
        return True
    if action.kind is ActionKind.BLOCK:
        return False
    return action.basis != rec.alice_pol
