"""Polarization-splitting-measurement attack.

Eve swaps the lossy Alice-to-Bob segment for a perfect channel and, on
attacked rounds, puts her own PBS plus detector D4 in front of Bob.  If her
PBS basis matches Alice's polarization, the path-``b`` pulse never reaches
Bob, which looks exactly like channel loss; if it does not match, the pulse
passes untouched.  After Alice announces a D1 click, Eve's bit for that
round is the inverse of her PBS basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .config import Adversary, StrategyConfig
from .errors import DegenerateInputError, InvalidParameterError
from .quantum import (
    MixedState,
    PathKind,
    PathState,
    Polarization,
    bit_of,
    check_splitter,
    erase_path_b,
    mix,
    split_at_bs1,
)
from .streams import BIT_EVE_BASIS, BIT_EVE_GUESS, U_EVE_ACTION, U_WHICH_PATH, RoundStream


class ActionKind(Enum):
    PASS = "pass"
    ATTACK = "attack"
    BLOCK = "block"


@dataclass(frozen=True)
class EveAction:
    kind: ActionKind
    basis: Polarization | None = None

    def __post_init__(self):
        if (self.kind is ActionKind.ATTACK) != (self.basis is not None):
            raise InvalidParameterError("an attack needs a PBS basis and nothing else does")

    @classmethod
    def passes(cls) -> "EveAction":
        return cls(ActionKind.PASS)

    @classmethod
    def attack(cls, basis: Polarization) -> "EveAction":
        return cls(ActionKind.ATTACK, Polarization(basis))

    @classmethod
    def block(cls) -> "EveAction":
        return cls(ActionKind.BLOCK)

    def __str__(self) -> str:
        if self.kind is ActionKind.ATTACK:
            return f"attack-{self.basis.name}"
        return self.kind.value


@dataclass(frozen=True)
class EveRoundLog:
    """What Eve knows about one round before any public announcement.

    ``guess_bit`` is her private coin, used in place of a measured bit on
    rounds she did not attack.
    """

    index: int
    action: EveAction
    d4_clicked: bool
    guess_bit: int = 0

    @property
    def provisional_bit(self) -> int | None:
        if self.action.kind is ActionKind.ATTACK:
            return 1 - bit_of(self.action.basis)
        return None


def action_probabilities(cfg: StrategyConfig) -> tuple[float, float, float]:
    """``(pass, attack, block)`` probabilities for the configured strategy."""
    eta = cfg.eta
    if cfg.adversary is Adversary.STRATEGY_I:
        if not eta < 0.5:
            raise InvalidParameterError(f"cheat strategy I needs eta < 1/2, got {eta!r}")
        return 1.0 - 2.0 * eta, 2.0 * eta, 0.0
    if cfg.adversary is Adversary.STRATEGY_II:
        if not eta >= 0.5:
            raise InvalidParameterError(f"cheat strategy II needs eta >= 1/2, got {eta!r}")
        attack, block = 2.0 * (1.0 - eta), 2.0 * eta - 1.0
        if cfg.inject_fault:
            attack, block = block, attack
        return 0.0, attack, block
    if cfg.adversary is Adversary.FORCED:
        return 0.0, 1.0, 0.0
    raise InvalidParameterError("no adversary configured")


def choose_action(cfg: StrategyConfig, u: float, basis: Polarization) -> EveAction:
    """Pick Eve's action from a uniform variate ``u``; ``basis`` is used if she attacks."""
    p_pass, p_attack, _ = action_probabilities(cfg)
    if u < p_pass:
        return EveAction.passes()
    if u < p_pass + p_attack:
        return EveAction.attack(basis)
    return EveAction.block()


def eve_intercept(state: PathState, basis: Polarization, u: float) -> tuple[PathState, bool]:
    """Eve's PBS in front of Bob, sending her basis toward D4.

    On a basis match the photon is either caught at D4 (returns ``Gone``)
    or was in path ``a`` all along; Bob receives vacuum either way.
    """
    if state.is_gone:
        raise DegenerateInputError("nothing arrives at Eve's PBS")
    if basis != state.pol or not state.has_path_b:
        return state, False
    collapsed = state.collapse(u)
    if collapsed.kind is PathKind.IN_PATH_B:
        return PathState.gone(), True
    return collapsed, False


class Eavesdropper:
    """Adversary hook for :func:`cfqkd.protocol.run_round`.

    Called with the state leaving BS1; returns the state handed to Bob and
    Eve's log for the round.  Holds no mutable state.
    """

    def __init__(self, cfg: StrategyConfig):
        action_probabilities(cfg)
        self.cfg = cfg

    def __call__(self, state: PathState, stream: RoundStream) -> tuple[PathState, EveRoundLog]:
        basis = Polarization.from_bit(stream.bit(BIT_EVE_BASIS))
        action = choose_action(self.cfg, stream.uniform(U_EVE_ACTION), basis)
        u = stream.uniform(U_WHICH_PATH)
        d4 = False
        if action.kind is ActionKind.ATTACK:
            state, d4 = eve_intercept(state, action.basis, u)
        elif action.kind is ActionKind.BLOCK:
            state = erase_path_b(state, u)
        return state, EveRoundLog(stream.index, action, d4, stream.bit(BIT_EVE_GUESS))


def extract_eve_key(logs: Iterable[EveRoundLog], announced_indices: Sequence[int]) -> list[int]:
    """Eve's raw key for the announced D1 rounds.

    Attacked rounds give the inverse of her PBS basis; the rest are filled
    with her private coin flips.
    """
    by_index = {log.index: log for log in logs}
    key = []
    for idx in announced_indices:
        try:
            log = by_index[idx]
        except KeyError:
            raise IndexError(f"announced round {idx} has no Eve log entry") from None
        bit = log.provisional_bit
        key.append(log.guess_bit if bit is None else bit)
    return key


def flip_if_worse(eve_key: Sequence[int], reference: Sequence[int]) -> list[int]:
    """Invert Eve's whole key when it disagrees with ``reference`` more than half the time."""
    if len(eve_key) != len(reference):
        raise InvalidParameterError("keys differ in length")
    errors = sum(e != r for e, r in zip(eve_key, reference))
    if 2 * errors > len(eve_key):
        return [1 - e for e in eve_key]
    return list(eve_key)


class RhoMode(str, Enum):
    HONEST = "honest"
    LOSS_I = "loss-i"
    LOSS_II = "loss-ii"


def _branch_mixture(pure: PathState, device) -> MixedState:
    # run each which-path branch through the device; collapsed branches are deterministic
    return mix([(p, MixedState.from_state(device(branch))) for p, branch in pure.branches()])


def _rho_blocked(pure: PathState) -> MixedState:
    return _branch_mixture(pure, lambda st: erase_path_b(st, 0.0))


def _rho_intercepted(pure: PathState, basis: Polarization) -> MixedState:
    passed, _ = eve_intercept(pure, basis, 0.0)
    if passed == pure:
        # orthogonal PBS: no which-path information, coherence survives
        return MixedState.from_state(pure)
    return _branch_mixture(pure, lambda st: eve_intercept(st, basis, 0.0)[0])


def rho_into_bob(pol: Polarization, eta: float, R: float, T: float, mode: RhoMode) -> MixedState:
    """Density matrix of the system as it enters Bob's site.

    ``HONEST`` mixes the lossless and lost-pulse states of a physical
    channel.  ``LOSS_I`` / ``LOSS_II`` are built branch by branch from Eve's
    action mixture under the respective cheat strategy.
    """
    check_splitter(R, T)
    mode = RhoMode(mode)
    if not 0.0 <= eta <= 1.0:
        raise InvalidParameterError(f"loss rate must lie in [0, 1], got {eta!r}")
    pol = Polarization(pol)
    pure = split_at_bs1(pol, R, T)
    rho_pure = MixedState.from_state(pure)
    if mode is RhoMode.HONEST:
        return mix([(1.0 - eta, rho_pure), (eta, _rho_blocked(pure))])

    same, other = pol, pol.flipped()
    if mode is RhoMode.LOSS_I:
        if not eta < 0.5:
            raise InvalidParameterError(f"cheat strategy I needs eta < 1/2, got {eta!r}")
        p_attack = 2.0 * eta
        return mix([
            (1.0 - p_attack, rho_pure),
            (p_attack / 2, _rho_intercepted(pure, other)),
            (p_attack / 2, _rho_intercepted(pure, same)),
        ])
    if not eta >= 0.5:
        raise InvalidParameterError(f"cheat strategy II needs eta >= 1/2, got {eta!r}")
    p_attack = 2.0 * (1.0 - eta)
    return mix([
        (p_attack / 2, _rho_intercepted(pure, other)),
        (p_attack / 2, _rho_intercepted(pure, same)),
        (2.0 * eta - 1.0, _rho_blocked(pure)),
    ])
