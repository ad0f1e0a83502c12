"""Exact enumeration of one protocol round with rational arithmetic.

Written without touching the package so it can serve as an independent
reference.  Every random choice of a round (bits, bases, losses, Eve's
action, which-path outcome, detector outcome, Eve's guess coin) is
enumerated with its exact probability.  After the first which-path
measurement the photon has a definite path, so a single path label per
round covers every later collapse.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

ONE = Fraction(1)
HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Event:
    alice: int
    bob: int
    loss_ab: bool
    loss_ba: bool
    action: str  # "none", "pass", "attack", "block"
    eve_basis: int | None
    outcome: str  # "D1", "D2", "D3", "D4", "none"
    eve_bit: int | None
    b_reaches_bob: bool


def _eve_options(adversary: str, eta: Fraction):
    if adversary == "none":
        return [(ONE, "none", None)]
    if adversary == "s1":
        opts = [(1 - 2 * eta, "pass", None)]
        opts += [(eta, "attack", e) for e in (0, 1)]
    elif adversary == "s2":
        opts = [((1 - eta), "attack", e) for e in (0, 1)]
        opts.append((2 * eta - 1, "block", None))
    elif adversary == "forced":
        opts = [(HALF, "attack", e) for e in (0, 1)]
    else:
        raise ValueError(adversary)
    return [o for o in opts if o[0] > 0]


def enumerate_round(R, eta, adversary: str = "none") -> dict[Event, Fraction]:
    R, eta = Fraction(R), Fraction(eta)
    T = 1 - R
    dist: dict[Event, Fraction] = defaultdict(Fraction)
    honest = adversary == "none"
    for alice in (0, 1):
        for bob in (0, 1):
            for p_eve, action, e in _eve_options(adversary, eta):
                for loss_ab in ((False, True) if honest else (False,)):
                    p_ab = (eta if loss_ab else 1 - eta) if honest else ONE
                    for loss_ba in (False, True):
                        p_ba = eta if loss_ba else 1 - eta
                        for path, p_path in (("a", T), ("b", R)):
                            weight = Fraction(1, 4) * p_eve * p_ab * p_ba * p_path
                            if weight == 0:
                                continue
                            for outcome, p_out, b_arr in _propagate(alice, bob, loss_ab, loss_ba, action, e, path, R):
                                if p_out == 0:
                                    continue
                                coins = [(1 - e, ONE)] if action == "attack" else [(0, HALF), (1, HALF)]
                                if honest:
                                    coins = [(None, ONE)]
                                for eve_bit, p_coin in coins:
                                    ev = Event(alice, bob, loss_ab, loss_ba, action, e, outcome, eve_bit, b_arr)
                                    dist[ev] += weight * p_out * p_coin
    return dict(dist)


def _propagate(alice, bob, loss_ab, loss_ba, action, e, path, R):
    """Yield ``(outcome, probability, path-b pulse reached Bob)`` for a fixed path label."""
    T = 1 - R
    state = "sup"
    if loss_ab or action == "block" or (action == "attack" and e == alice):
        if action == "attack" and path == "b":
            yield "D4", ONE, False
            return
        state = "gone" if path == "b" else "a"
    b_arrival = state == "sup"
    if state == "sup" and bob == alice:
        if path == "b":
            yield "D3", ONE, b_arrival
            return
        state = "a"
    if state == "sup" and loss_ba:
        state = "gone" if path == "b" else "a"
    if state == "sup":
        yield "D2", ONE, b_arrival
    elif state == "a":
        yield "D1", R, b_arrival
        yield "D2", T, b_arrival
    else:
        yield "none", ONE, b_arrival


def prob(dist, pred) -> Fraction:
    return sum((p for ev, p in dist.items() if pred(ev)), Fraction(0))


def cond(dist, pred, given) -> Fraction:
    return prob(dist, lambda ev: pred(ev) and given(ev)) / prob(dist, given)


def sifted(ev: Event) -> bool:
    return ev.outcome == "D1"
