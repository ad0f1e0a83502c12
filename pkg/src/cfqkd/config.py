from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .errors import InvalidParameterError
from .quantum import check_splitter
from .streams import MAX_SEED


class Adversary(str, Enum):
    NONE = "none"
    STRATEGY_I = "s1"
    STRATEGY_II = "s2"
    FORCED = "forced"

    @classmethod
    def auto(cls, eta: float) -> "Adversary":
        """Strategy I below one half, Strategy II from one half upward."""
        return cls.STRATEGY_I if eta < 0.5 else cls.STRATEGY_II


@dataclass(frozen=True)
class StrategyConfig:
    """Protocol and adversary parameters for one Monte Carlo experiment.

    ``eta`` is the one-way loss rate, applied independently on the
    Alice-to-Bob and Bob-to-Alice segments.  ``check_fraction`` reserves a
    random share of D1 clicks for eavesdropping checks; those rounds are
    dropped from the key.  ``inject_fault`` deliberately swaps the attack
    and block probabilities of Strategy II so that the verifier has
    something to catch.
    """

    R: float = 0.5
    T: float = 0.5
    eta: float = 0.0
    adversary: Adversary = Adversary.NONE
    n_rounds: int = 1_000_000
    seed: int = 0
    check_fraction: float = 0.0
    inject_fault: bool = False

    def __post_init__(self):
        object.__setattr__(self, "adversary", Adversary(self.adversary))
        check_splitter(self.R, self.T)
        if not (0.0 <= self.eta <= 1.0) or math.isnan(self.eta):
            raise InvalidParameterError(f"loss rate must lie in [0, 1], got {self.eta!r}")
        if self.adversary is Adversary.STRATEGY_I and not self.eta < 0.5:
            raise InvalidParameterError(f"cheat strategy I needs eta < 1/2, got {self.eta!r}")
        if self.adversary is Adversary.STRATEGY_II and not self.eta >= 0.5:
            raise InvalidParameterError(f"cheat strategy II needs eta >= 1/2, got {self.eta!r}")
        if int(self.n_rounds) != self.n_rounds or self.n_rounds < 1:
            raise InvalidParameterError(f"n_rounds must be a positive integer, got {self.n_rounds!r}")
        if not (0 <= int(self.seed) <= MAX_SEED):
            raise InvalidParameterError(f"seed must fit in 64 unsigned bits, got {self.seed!r}")
        if not (0.0 <= self.check_fraction <= 1.0):
            raise InvalidParameterError(f"check_fraction must lie in [0, 1], got {self.check_fraction!r}")

    @classmethod
    def symmetric(cls, R: float = 0.5, **kwargs) -> "StrategyConfig":
        return cls(R=R, T=1.0 - R, **kwargs)

    def with_(self, **changes) -> "StrategyConfig":
        return replace(self, **changes)
