"""Dual-rail single-photon optics for the counterfactual interferometer.

A photon leaves Alice's source with a definite polarization, is split at
BS1 into path ``a`` (stays at Alice) and path ``b`` (travels to Bob and
back), and is recombined at BS2.  Polarization never becomes superposed in
this setup, so it is carried as a classical label; only the path degree of
freedom needs amplitudes.

Randomness enters through explicit uniform variates ``u`` in ``[0, 1)``.
Every which-path collapse in a round compares the same variate against
``|amp_b|**2``: a photon found in path ``b`` by one element would have been
found there by any other.

Phase convention: BS1 gives real amplitudes ``(sqrt(T), sqrt(R))`` on
``(a, b)``; BS2 applies ``[[sqrt(T), sqrt(R)], [sqrt(R), -sqrt(T)]]`` mapping
``(a, b) -> (D2, D1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidParameterError

ALGEBRA_TOL = 1e-12
PSD_TOL = 1e-10


class Polarization(IntEnum):
    """Photon polarization; the integer value is the encoded bit."""

    V = 0
    H = 1

    @property
    def bit(self) -> int:
        return int(self)

    @classmethod
    def from_bit(cls, bit: int) -> "Polarization":
        return cls(int(bit))

    def flipped(self) -> "Polarization":
        return Polarization(1 - int(self))


def bit_of(pol: Polarization) -> int:
    return int(pol)


class PathKind(Enum):
    SUPERPOSED = "superposed"
    IN_PATH_A = "a"
    IN_PATH_B = "b"
    GONE = "gone"


@dataclass(frozen=True)
class PathState:
    kind: PathKind
    pol: Polarization | None = None
    amp_a: complex = 0.0
    amp_b: complex = 0.0

    def __post_init__(self):
        if self.kind is PathKind.GONE:
            return
        if self.pol is None:
            raise InvalidParameterError(f"{self.kind.value} state needs a polarization")
        if self.kind is PathKind.SUPERPOSED:
            norm = abs(self.amp_a) ** 2 + abs(self.amp_b) ** 2
            if abs(norm - 1.0) > ALGEBRA_TOL:
                raise InvalidParameterError(f"amplitudes not normalized: |a|^2+|b|^2={norm!r}")

    @classmethod
    def superposed(cls, amp_a: complex, amp_b: complex, pol: Polarization) -> "PathState":
        return cls(PathKind.SUPERPOSED, Polarization(pol), amp_a, amp_b)

    @classmethod
    def in_path_a(cls, pol: Polarization) -> "PathState":
        return cls(PathKind.IN_PATH_A, Polarization(pol), 1.0, 0.0)

    @classmethod
    def in_path_b(cls, pol: Polarization) -> "PathState":
        return cls(PathKind.IN_PATH_B, Polarization(pol), 0.0, 1.0)

    @classmethod
    def gone(cls) -> "PathState":
        return cls(PathKind.GONE)

    @property
    def is_gone(self) -> bool:
        return self.kind is PathKind.GONE

    @property
    def has_path_b(self) -> bool:
        return self.kind in (PathKind.SUPERPOSED, PathKind.IN_PATH_B)

    @property
    def p_path_b(self) -> float:
        """Probability that a which-path measurement finds the photon in ``b``."""
        if self.kind is PathKind.SUPERPOSED:
            return abs(self.amp_b) ** 2
        return 1.0 if self.kind is PathKind.IN_PATH_B else 0.0

    def branches(self) -> list[tuple[float, "PathState"]]:
        """Which-path measurement outcomes as ``(probability, state)`` pairs."""
        if self.kind is not PathKind.SUPERPOSED:
            return [(1.0, self)]
        pb = self.p_path_b
        return [(pb, PathState.in_path_b(self.pol)), (1.0 - pb, PathState.in_path_a(self.pol))]

    def collapse(self, u: float) -> "PathState":
        if self.kind is not PathKind.SUPERPOSED:
            return self
        if u < self.p_path_b:
            return PathState.in_path_b(self.pol)
        return PathState.in_path_a(self.pol)

    def ket(self) -> np.ndarray:
        """State vector over the ordered basis ``(vac, aV, aH, bV, bH)``."""
        v = np.zeros(5, dtype=complex)
        if self.kind is PathKind.GONE:
            v[0] = 1.0
            return v
        v[1 + int(self.pol)] = self.amp_a
        v[3 + int(self.pol)] = self.amp_b
        return v


class Outcome(IntEnum):
    """Terminal event of a round. ``D4`` is Eve's detector: Alice sees nothing."""

    D1 = 0
    D2 = 1
    D3 = 2
    D4 = 3
    NO_CLICK = 4


@dataclass(frozen=True)
class OutcomeDistribution:
    probs: tuple[float, float, float, float, float]
    pol: Polarization | None = None

    def __post_init__(self):
        if len(self.probs) != len(Outcome):
            raise InvalidParameterError("need one probability per outcome")
        if any(p < -ALGEBRA_TOL or p > 1 + ALGEBRA_TOL for p in self.probs):
            raise InvalidParameterError(f"probabilities out of range: {self.probs}")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > ALGEBRA_TOL:
            raise InvalidParameterError(f"probabilities sum to {total!r}")

    def __getitem__(self, outcome: Outcome) -> float:
        return self.probs[int(outcome)]

    def sample(self, u: float) -> Outcome:
        """Inverse-CDF draw in :class:`Outcome` order; rounding slack goes to the last live outcome."""
        acc = 0.0
        last = None
        for outcome, p in zip(Outcome, self.probs):
            if p <= 0.0:
                continue
            acc += p
            last = outcome
            if u < acc:
                return outcome
        return last


def check_splitter(R: float, T: float) -> None:
    if not (0.0 < R < 1.0):
        raise InvalidParameterError(f"reflectivity must lie in (0, 1), got {R!r}")
    if abs(R + T - 1.0) > ALGEBRA_TOL:
        raise InvalidParameterError(f"R + T must equal 1, got {R!r} + {T!r}")


def split_at_bs1(pol: Polarization, R: float, T: float) -> PathState:
    check_splitter(R, T)
    return PathState.superposed(math.sqrt(T), math.sqrt(R), pol)


def erase_path_b(state: PathState, u: float) -> PathState:
    """Lose whatever travels in path ``b`` (channel loss or a full block).

    A superposed photon found in ``b`` is gone; otherwise it is left in ``a``.
    """
    if state.kind is PathKind.IN_PATH_B:
        return PathState.gone()
    if state.kind is PathKind.SUPERPOSED:
        collapsed = state.collapse(u)
        return PathState.gone() if collapsed.kind is PathKind.IN_PATH_B else collapsed
    return state


def pbs_interact(state: PathState, pbs_basis: Polarization, u: float) -> tuple[PathState, bool]:
    """Bob's PBS: the matching polarization in path ``b`` is sent to D3.

    Returns the surviving state and whether the side detector fired.  When
    it fires, the returned state is ``InPathB`` (the photon ended at D3).
    """
    if state.is_gone:
        raise DegenerateInputError("nothing arrives at the PBS")
    if pbs_basis != state.pol or not state.has_path_b:
        return state, False
    collapsed = state.collapse(u)
    return collapsed, collapsed.kind is PathKind.IN_PATH_B


def bs2_matrix(R: float) -> np.ndarray:
    """Unitary of BS2 acting on ``(a, b)`` and producing ``(D2, D1)`` amplitudes."""
    sr, st = math.sqrt(R), math.sqrt(1.0 - R)
    return np.array([[st, sr], [sr, -st]])


def interfere_at_bs2(state: PathState, R: float) -> OutcomeDistribution:
    if state.kind is PathKind.IN_PATH_B:
        raise DegenerateInputError("path b is still propagating; recombine after it returns")
    if state.is_gone:
        return OutcomeDistribution((0.0, 0.0, 0.0, 0.0, 1.0))
    d2, d1 = bs2_matrix(R) @ np.array([state.amp_a, state.amp_b], dtype=complex)
    p1, p2 = abs(d1) ** 2, abs(d2) ** 2
    return OutcomeDistribution((p1, p2, 0.0, 0.0, 0.0), state.pol)


BASIS_LABELS = ("vac", "aV", "aH", "bV", "bH")


@dataclass(frozen=True, eq=False)
class MixedState:
    """Density matrix over ``(vac, aV, aH, bV, bH)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (5, 5):
            raise InvalidParameterError(f"expected a 5x5 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > ALGEBRA_TOL:
            raise InvalidParameterError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > ALGEBRA_TOL:
            raise InvalidParameterError(f"trace is {np.trace(m).real!r}, not 1")
        if np.min(np.linalg.eigvalsh(m)) < -PSD_TOL:
            raise InvalidParameterError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "MixedState":
        v = np.asarray(ket, dtype=complex)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def from_state(cls, state: PathState) -> "MixedState":
        return cls.from_ket(state.ket())

    @classmethod
    def vacuum(cls) -> "MixedState":
        return cls.from_state(PathState.gone())


def mix(components: Iterable[tuple[float, MixedState]]) -> MixedState:
    components = list(components)
    if not components:
        raise InvalidParameterError("empty mixture")
    weights = [w for w, _ in components]
    if any(w < 0 for w in weights):
        raise InvalidParameterError(f"negative mixture weight in {weights}")
    if abs(math.fsum(weights) - 1.0) > ALGEBRA_TOL:
        raise InvalidParameterError(f"mixture weights sum to {math.fsum(weights)!r}")
    total = np.zeros((5, 5), dtype=complex)
    for w, rho in components:
        total = total + w * rho.matrix
    return MixedState(total)


def density_distance(a: MixedState, b: MixedState) -> float:
    """Largest absolute entrywise difference."""
    return float(np.max(np.abs(a.matrix - b.matrix)))
