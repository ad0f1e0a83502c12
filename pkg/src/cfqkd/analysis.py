"""Closed-form rates and information measures, plus their Monte Carlo estimators.

All rates are per source photon.  Entropies are in bits with
``0 * log 0 = 0``.  Key bits in every closed-form joint distribution are
uniform, so each joint is fixed by its "same" and "diff" probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError
from .quantum import ALGEBRA_TOL


class Strategy(Enum):
    I = "I"
    II = "II"

    @classmethod
    def for_eta(cls, eta: float) -> "Strategy":
        return cls.I if eta < 0.5 else cls.II


class Party(Enum):
    ALICE = "alice"
    BOB = "bob"


def _check_eta(eta: float) -> None:
    if not (0.0 <= eta <= 1.0):
        raise InvalidParameterError(f"loss rate must lie in [0, 1], got {eta!r}")


def _check_rt(R: float, T: float) -> None:
    if not (0.0 <= R <= 1.0) or abs(R + T - 1.0) > ALGEBRA_TOL:
        raise InvalidParameterError(f"need 0 <= R <= 1 and R + T = 1, got R={R!r}, T={T!r}")


def _check_strategy_domain(eta: float, strategy: Strategy, *, closed: bool = False) -> None:
    _check_eta(eta)
    if strategy is Strategy.I and not (eta <= 0.5 if closed else eta < 0.5):
        raise InvalidParameterError(f"cheat strategy I is defined for eta < 1/2, got {eta!r}")
    if strategy is Strategy.II and not eta >= 0.5:
        raise InvalidParameterError(f"cheat strategy II is defined for eta >= 1/2, got {eta!r}")


def _growth(eta: float) -> float:
    # 1 + 2*eta - eta^2 shows up in every normalization
    return 1.0 + 2.0 * eta - eta * eta


def case_probabilities(R: float, T: float) -> tuple[float, float, float]:
    """Per-photon sift probability within channel cases I, II and III."""
    _check_rt(R, T)
    return R * T / 2.0, R * T, R * T


def case_weights(eta: float) -> tuple[float, float, float]:
    """Probabilities of no loss, loss on A->B, and loss only on B->A."""
    _check_eta(eta)
    return (1.0 - eta) ** 2, eta, (1.0 - eta) * eta


def case_rates(eta: float, R: float, T: float) -> tuple[float, float, float]:
    return tuple(w * p for w, p in zip(case_weights(eta), case_probabilities(R, T)))


def raw_key_rate(eta: float, R: float, T: float) -> float:
    """Sifted bits per source photon.  Equals ``(1 + 2 eta - eta^2) / 2 * R T``."""
    return math.fsum(case_rates(eta, R, T))


@dataclass(frozen=True)
class JointDistribution:
    """Joint law of two parties' key bits, ``pXY = P(first = X, second = Y)``."""

    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        cells = self.cells
        if any(p < 0 for p in cells):
            raise InvalidParameterError(f"negative probability in {cells}")
        if abs(math.fsum(cells) - 1.0) > ALGEBRA_TOL:
            raise InvalidParameterError(f"cells sum to {math.fsum(cells)!r}")

    @classmethod
    def from_same_diff(cls, same: float, diff: float) -> "JointDistribution":
        return cls(same / 2.0, diff / 2.0, diff / 2.0, same / 2.0)

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> "JointDistribution":
        counts = np.asarray(counts, dtype=float).reshape(2, 2)
        total = counts.sum()
        if total <= 0:
            raise InvalidParameterError("no samples")
        return cls(*(counts / total).ravel())

    @property
    def cells(self) -> tuple[float, float, float, float]:
        return self.p00, self.p01, self.p10, self.p11

    @property
    def same(self) -> float:
        return self.p00 + self.p11

    @property
    def diff(self) -> float:
        return self.p01 + self.p10

    def flipped(self) -> "JointDistribution":
        """Relabel the first party's bit (0 <-> 1)."""
        return JointDistribution(self.p10, self.p11, self.p00, self.p01)


def ab_joint(eta: float) -> JointDistribution:
    _check_eta(eta)
    g = _growth(eta)
    return JointDistribution.from_same_diff(1.0 / g, (2.0 * eta - eta * eta) / g)


def eve_joint(eta: float, strategy: Strategy, party: Party) -> JointDistribution:
    """Eve's key against Alice's or Bob's under a cheat strategy, in closed form.

    Strategy I is accepted on the closed interval ``[0, 1/2]`` so the two
    branches can be compared at the boundary.
    """
    strategy, party = Strategy(strategy), Party(party)
    _check_strategy_domain(eta, strategy, closed=True)
    g = _growth(eta)
    e2 = eta * eta
    if strategy is Strategy.I:
        if party is Party.ALICE:
            same, diff = (1.0 + eta) / (2.0 * g), (1.0 + 3.0 * eta - 2.0 * e2) / (2.0 * g)
        else:
            same, diff = (1.0 + 3.0 * eta - 4.0 * e2) / (2.0 * g), (1.0 + eta + 2.0 * e2) / (2.0 * g)
    else:
        if party is Party.ALICE:
            same, diff = (2.0 * eta - e2) / g, 1.0 / g
        else:
            same, diff = (1.0 - eta + e2) / g, (3.0 * eta - 2.0 * e2) / g
    return JointDistribution.from_same_diff(same, diff)


@dataclass(frozen=True)
class ComponentRates:
    """Eve's cheated raw-key rates, split by how each bit arose.

    Every field is a tuple over the components.  For strategy I these are
    (not attacked, attacked with matching basis, attacked with other
    basis); for strategy II (attacked, blocked).
    """

    total: tuple[float, ...]
    ea_same: tuple[float, ...]
    ea_diff: tuple[float, ...]
    eb_same: tuple[float, ...]
    eb_diff: tuple[float, ...]

    @property
    def raw_rate(self) -> float:
        return math.fsum(self.total)

    def joint(self, party: Party) -> JointDistribution:
        party = Party(party)
        same = self.ea_same if party is Party.ALICE else self.eb_same
        diff = self.ea_diff if party is Party.ALICE else self.eb_diff
        s, d = math.fsum(same), math.fsum(diff)
        return JointDistribution.from_same_diff(s / (s + d), d / (s + d))


def strategy1_component_rates(eta: float, R: float, T: float, *, split_case3: bool = False) -> ComponentRates:
    """Component rates under cheat strategy I.

    With ``split_case3=True`` the Eve-Bob counts of the third component
    follow the round-level physics: when the returning pulse is lost, Bob's
    bit matches Alice's (and hence Eve's) half of the time, so those rounds
    split evenly between "same" and "diff".  The default reproduces the
    closed-form tally behind :func:`eve_joint`, which books all of them as "diff".
    """
    _check_strategy_domain(eta, Strategy.I)
    _check_rt(R, T)
    p1, p2, p3 = case_probabilities(R, T)
    rt = R * T
    e2 = eta * eta
    r1 = (1.0 - 2.0 * eta) * (1.0 - eta) * p1 + (1.0 - 2.0 * eta) * eta * p3
    r2 = eta * p2
    r3 = eta * (1.0 - eta) * p1 + e2 * p3
    if split_case3:
        eb3_same, eb3_diff = eta / 2.0 * rt, e2 / 2.0 * rt
    else:
        eb3_same, eb3_diff = eta * (1.0 - eta) / 2.0 * rt, e2 * rt
    return ComponentRates(
        total=(r1, r2, r3),
        ea_same=(r1 / 2.0, 0.0, r3),
        ea_diff=(r1 / 2.0, r2, 0.0),
        eb_same=(r1 / 2.0, r2 / 2.0, eb3_same),
        eb_diff=(r1 / 2.0, r2 / 2.0, eb3_diff),
    )


def strategy2_component_rates(eta: float, R: float, T: float, *, split_case3: bool = False) -> ComponentRates:
    """Component rates under cheat strategy II: scaled attack part plus block part."""
    _check_strategy_domain(eta, Strategy.II)
    _check_rt(R, T)
    rt = R * T
    e2 = eta * eta
    scale = (1.0 - eta) / eta
    r2, r3 = eta * rt, (eta + e2) / 2.0 * rt
    if split_case3:
        eb3_same, eb3_diff = eta / 2.0 * rt, e2 / 2.0 * rt
    else:
        eb3_same, eb3_diff = eta * (1.0 - eta) / 2.0 * rt, e2 * rt
    blocked = (2.0 * eta - 1.0) * case_probabilities(R, T)[1]
    return ComponentRates(
        total=(scale * (r2 + r3), blocked),
        ea_same=(scale * r3, blocked / 2.0),
        ea_diff=(scale * r2, blocked / 2.0),
        eb_same=(scale * (r2 / 2.0 + eb3_same), blocked / 2.0),
        eb_diff=(scale * (r2 / 2.0 + eb3_diff), blocked / 2.0),
    )


def component_rates(eta: float, R: float, T: float, strategy: Strategy, *, split_case3: bool = False) -> ComponentRates:
    if Strategy(strategy) is Strategy.I:
        return strategy1_component_rates(eta, R, T, split_case3=split_case3)
    return strategy2_component_rates(eta, R, T, split_case3=split_case3)


def _entropy(probs) -> float:
    # sorted summation keeps the result independent of cell order
    return -math.fsum(sorted(p * math.log2(p) for p in probs if p > 0.0))


def mutual_information(j: JointDistribution) -> float:
    h_first = _entropy((j.p00 + j.p01, j.p10 + j.p11))
    h_second = _entropy((j.p00 + j.p10, j.p01 + j.p11))
    # clip rounding residue; two bits share at most one bit
    return min(max(h_first + h_second - _entropy(j.cells), 0.0), 1.0)


@dataclass(frozen=True)
class InformationTerms:
    i_ab: float
    i_ea: float
    i_eb: float

    @property
    def eve_min(self) -> float:
        return min(self.i_ea, self.i_eb)

    @property
    def secret_fraction(self) -> float:
        return self.i_ab - self.eve_min


def information_terms(eta: float) -> InformationTerms:
    """``I(A;B)``, ``I(E;A)`` and ``I(E;B)`` under the strategy that applies at ``eta``."""
    _check_eta(eta)
    strategy = Strategy.for_eta(eta)
    return InformationTerms(
        mutual_information(ab_joint(eta)),
        mutual_information(eve_joint(eta, strategy, Party.ALICE)),
        mutual_information(eve_joint(eta, strategy, Party.BOB)),
    )


def secret_fraction(eta: float, R: float = 0.5, T: float = 0.5) -> float:
    """One-way secret fraction, not clamped; negative means no key."""
    _check_rt(R, T)
    return information_terms(eta).secret_fraction


def secret_key_rate(eta: float, R: float = 0.5, T: float = 0.5) -> float:
    return raw_key_rate(eta, R, T) * max(secret_fraction(eta, R, T), 0.0)


def z_value(confidence: float) -> float:
    if not 0.0 < confidence < 1.0:
        raise InvalidParameterError(f"confidence must lie in (0, 1), got {confidence!r}")
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def binomial_interval(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    """Two-sided normal-approximation interval with continuity correction, clipped to [0, 1]."""
    if trials <= 0 or not 0 <= successes <= trials:
        raise InvalidParameterError(f"need 0 <= successes <= trials and trials > 0, got {successes}/{trials}")
    p = successes / trials
    half = z_value(confidence) * math.sqrt(p * (1.0 - p) / trials) + 0.5 / trials
    return max(0.0, p - half), min(1.0, p + half)


def _half_width(lo: float, hi: float, centre: float) -> float:
    return max(hi - centre, centre - lo)


def _mi_rows(cells: np.ndarray) -> np.ndarray:
    """Mutual information of each row of a ``(k, 2, 2)`` count array."""
    p = cells / cells.sum(axis=(1, 2), keepdims=True)

    def h(q):
        q = np.where(q > 0, q, 1.0)
        return -(q * np.log2(q)).reshape(len(q), -1).sum(axis=1)

    return np.clip(h(p.sum(axis=2)) + h(p.sum(axis=1)) - h(p), 0.0, 1.0)


def pairwise_cells(key_cells: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A,B), (E,A) and (E,B) count tables from ``key_cells[a, b, e]``, leading axes preserved."""
    ab = key_cells.sum(axis=-1)
    ea = np.swapaxes(key_cells.sum(axis=-2), -1, -2)
    eb = np.swapaxes(key_cells.sum(axis=-3), -1, -2)
    return ab, ea, eb


def apply_eve_flip(key_cells: np.ndarray) -> np.ndarray:
    """Invert Eve's bits if she disagrees with Alice on more than half the key."""
    _, ea, _ = pairwise_cells(key_cells)
    if 2 * (ea[0, 1] + ea[1, 0]) > ea.sum():
        return key_cells[:, :, ::-1].copy()
    return key_cells


def mc_information(key_cells: np.ndarray) -> InformationTerms:
    ab, ea, eb = pairwise_cells(np.asarray(key_cells))
    return InformationTerms(
        *(mutual_information(JointDistribution.from_counts(c)) for c in (ab, ea, eb))
    )


BOOTSTRAP_DRAWS = 2000


def bootstrap_secret(
    key_cells: np.ndarray, sifted: int, total: int, draws: int = BOOTSTRAP_DRAWS
) -> tuple[float, float]:
    """Bootstrap standard errors of the secret fraction and of the secret key rate.

    Parametric resampling: key cells are redrawn from their multinomial and
    the sift count from its binomial.  The generator is seeded from the
    counts, so the result is a pure function of the inputs.
    """
    flat = np.asarray(key_cells, dtype=np.int64).ravel()
    n_key = int(flat.sum())
    rng = np.random.default_rng([int(c) for c in flat] + [int(sifted), int(total)])
    cells = rng.multinomial(n_key, flat / n_key, size=draws).reshape(draws, 2, 2, 2).astype(float)
    ab, ea, eb = pairwise_cells(cells)
    r = _mi_rows(ab) - np.minimum(_mi_rows(ea), _mi_rows(eb))
    raw = rng.binomial(total, sifted / total, size=draws) / total
    qkd = raw * np.maximum(r, 0.0)
    return float(np.std(r, ddof=1)), float(np.std(qkd, ddof=1))


@dataclass
class RateReport:
    """Analytic and Monte Carlo rates at one loss rate; one row of the sweep CSV.

    ``*_ci`` fields are half-widths of the requested confidence level.
    Monte Carlo fields are ``None`` when no simulation backs them.
    """

    eta: float
    r_raw_analytic: float
    p_ab_diff_analytic: float
    i_ab: float
    i_ea: float
    i_eb: float
    r_secret_fraction: float
    r_secret_fraction_unclamped: float
    r_qkd_analytic: float
    r_raw_mc: float | None = None
    r_raw_ci: float | None = None
    p_ab_diff_mc: float | None = None
    p_ab_diff_ci: float | None = None
    i_ab_mc: float | None = None
    i_ea_mc: float | None = None
    i_eb_mc: float | None = None
    r_secret_fraction_mc: float | None = None
    r_secret_fraction_mc_ci: float | None = None
    r_qkd_mc: float | None = None
    r_qkd_ci: float | None = None

    @property
    def secret_fraction_mc_interval(self) -> tuple[float, float] | None:
        if self.r_secret_fraction_mc is None:
            return None
        hw = self.r_secret_fraction_mc_ci
        return self.r_secret_fraction_mc - hw, self.r_secret_fraction_mc + hw

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def analytic_report(eta: float, R: float = 0.5, T: float = 0.5, source_rate: float = 1.0) -> RateReport:
    terms = information_terms(eta)
    r = terms.secret_fraction
    raw = raw_key_rate(eta, R, T) * source_rate
    return RateReport(
        eta=eta,
        r_raw_analytic=raw,
        p_ab_diff_analytic=ab_joint(eta).diff,
        i_ab=terms.i_ab,
        i_ea=terms.i_ea,
        i_eb=terms.i_eb,
        r_secret_fraction=max(r, 0.0),
        r_secret_fraction_unclamped=r,
        r_qkd_analytic=raw * max(r, 0.0),
    )


def attach_mc(
    report: RateReport,
    stats,
    *,
    with_eve: bool,
    confidence: float = 0.99,
    eve_flip: bool = False,
    source_rate: float = 1.0,
) -> RateReport:
    """Fill the Monte Carlo fields of ``report`` from a :class:`ClickStats` tally."""
    z = z_value(confidence)
    report.r_raw_mc = stats.sifted / stats.total * source_rate
    lo, hi = binomial_interval(stats.sifted, stats.total, confidence)
    report.r_raw_ci = _half_width(lo, hi, stats.sifted / stats.total) * source_rate
    if stats.key_length == 0:
        return report
    report.p_ab_diff_mc = stats.key_mismatches / stats.key_length
    lo, hi = binomial_interval(stats.key_mismatches, stats.key_length, confidence)
    report.p_ab_diff_ci = _half_width(lo, hi, report.p_ab_diff_mc)
    if not with_eve:
        report.i_ab_mc = mc_information(stats.key_cells).i_ab
        return report
    cells = apply_eve_flip(stats.key_cells) if eve_flip else stats.key_cells
    terms = mc_information(cells)
    report.i_ab_mc, report.i_ea_mc, report.i_eb_mc = terms.i_ab, terms.i_ea, terms.i_eb
    report.r_secret_fraction_mc = terms.secret_fraction
    se_r, se_qkd = bootstrap_secret(cells, stats.sifted, stats.total)
    report.r_secret_fraction_mc_ci = z * se_r
    report.r_qkd_mc = report.r_raw_mc * max(terms.secret_fraction, 0.0)
    report.r_qkd_ci = z * se_qkd * source_rate
    return report


def two_sample_sigma(k1: int, n1: int, k2: int, n2: int) -> float:
    """Standard deviation of the difference of two independent sample proportions."""
    p1, p2 = k1 / n1, k2 / n2
    return math.sqrt(p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2)


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def z_score(observed: Sequence[int], expected_p: float) -> float:
    """``(k/n - p) / sqrt(p(1-p)/n)`` for ``observed = (k, n)``; infinite if p is degenerate and missed."""
    k, n = observed
    diff = k / n - expected_p
    sigma = binomial_sigma(expected_p, n)
    if sigma == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / sigma
