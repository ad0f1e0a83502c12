"""Command line: ``cfqkd sweep | verify | simulate``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or domain
error, 3 I/O error.  Options may also come from a plain ``key = value``
file given with ``--config``; command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import verify as vf
from .config import Adversary, StrategyConfig
from .engine import ACTION_NAMES, ATTACK, NO_EVE, simulate, simulate_columns
from .errors import InvalidParameterError
from .quantum import Outcome
from .streams import derive_seed

log = logging.getLogger("cfqkd")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

CSV_COLUMNS = (
    "eta",
    "r_raw_analytic", "r_raw_mc", "r_raw_ci",
    "p_ab_diff_analytic", "p_ab_diff_mc", "p_ab_diff_ci",
    "i_ab", "i_ea", "i_eb",
    "r_secret_fraction", "r_secret_fraction_unclamped",
    "r_qkd_analytic", "r_qkd_mc", "r_qkd_ci",
)

DEFAULTS = dict(
    eta_start=0.0,
    eta_end=1.0,
    steps=51,
    rounds=1_000_000,
    seed=0,
    reflectivity=0.5,
    adversary="auto",
    check_fraction=0.0,
    eve_flip=False,
    analytic_only=False,
    confidence=0.99,
    source_rate=1.0,
    workers=1,
    eta=0.0,
)

ADVERSARY_CHOICES = ("none", "s1", "s2", "auto", "forced")

_SWEEP_TAG = 10


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def format_number(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".12g")


def sweep_reports(
    etas,
    *,
    rounds: int,
    seed: int,
    R: float,
    adversary: str = "auto",
    analytic_only: bool = False,
    check_fraction: float = 0.0,
    eve_flip: bool = False,
    confidence: float = 0.99,
    source_rate: float = 1.0,
    workers: int = 1,
) -> list[an.RateReport]:
    reports = []
    for k, eta in enumerate(etas):
        report = an.analytic_report(eta, R, 1.0 - R, source_rate)
        if not analytic_only:
            adv = Adversary.auto(eta) if adversary == "auto" else Adversary(adversary)
            cfg = StrategyConfig.symmetric(
                R, eta=eta, adversary=adv, n_rounds=rounds,
                seed=derive_seed(seed, _SWEEP_TAG, k), check_fraction=check_fraction,
            )
            stats = simulate(cfg, workers)
            an.attach_mc(report, stats, with_eve=adv is not Adversary.NONE, confidence=confidence,
                         eve_flip=eve_flip, source_rate=source_rate)
        reports.append(report)
    return reports


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        d = rep.as_dict()
        writer.writerow([format_number(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_plots(reports, prefix: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    prefix = Path(prefix)
    eta = np.array([r.eta for r in reports])
    cols = {
        "i_ab": [r.i_ab for r in reports],
        "eve_min": [min(r.i_ea, r.i_eb) for r in reports],
        "r_secret_fraction": [r.r_secret_fraction_unclamped for r in reports],
        "r_raw": [r.r_raw_analytic for r in reports],
        "r_qkd": [r.r_qkd_analytic for r in reports],
    }
    data_path = prefix.with_suffix(".dat")
    header = "eta " + " ".join(cols)
    np.savetxt(data_path, np.column_stack([eta, *cols.values()]), fmt="%.12g", header=header)

    fig3, ax = plt.subplots(figsize=(6, 4))
    ax.plot(eta, cols["i_ab"], label="I(A;B)")
    ax.plot(eta, cols["eve_min"], label="min(I(E;A), I(E;B))")
    ax.plot(eta, cols["r_secret_fraction"], label="secret fraction")
    ax.set_xlabel("one-way loss rate")
    ax.set_ylabel("bits")
    ax.legend()
    fig4, ax = plt.subplots(figsize=(6, 4))
    ax.plot(eta, cols["r_raw"], label="raw key rate")
    ax.plot(eta, cols["r_qkd"], label="secret key rate")
    ax.set_xlabel("one-way loss rate")
    ax.set_ylabel("bits per source photon")
    ax.legend()
    paths = [data_path]
    for fig, tag in ((fig3, "information"), (fig4, "rates")):
        path = prefix.parent / f"{prefix.name}-{tag}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _grid(args) -> list[float]:
    if not (0.0 <= args.eta_start <= args.eta_end <= 1.0):
        raise CliError("need 0 <= eta-start <= eta-end <= 1", EXIT_USAGE)
    if args.steps < 1:
        raise CliError("steps must be at least 1", EXIT_USAGE)
    if args.workers < 1:
        raise CliError("workers must be at least 1", EXIT_USAGE)
    return vf.eta_grid(args.eta_start, args.eta_end, args.steps)


def cmd_sweep(args) -> int:
    etas = _grid(args)
    if not args.analytic_only and args.rounds < 1:
        raise CliError("rounds must be at least 1 (use --analytic-only to skip simulation)", EXIT_USAGE)
    if not args.source_rate > 0:
        raise CliError("source-rate must be positive", EXIT_USAGE)
    reports = sweep_reports(
        etas, rounds=args.rounds, seed=args.seed, R=args.reflectivity, adversary=args.adversary,
        analytic_only=args.analytic_only, check_fraction=args.check_fraction, eve_flip=args.eve_flip,
        confidence=args.confidence, source_rate=args.source_rate, workers=args.workers,
    )
    _write_text(args.out, reports_to_csv(reports))
    if args.plot:
        try:
            for path in write_plots(reports, args.plot):
                log.info("wrote %s", path)
        except OSError as exc:
            raise CliError(f"cannot write plots: {exc}", EXIT_IO) from exc
    return EXIT_OK


def cmd_verify(args) -> int:
    etas = _grid(args)
    if args.rounds < 1:
        raise CliError("rounds must be at least 1", EXIT_USAGE)
    checks = vf.run_all(args.rounds, args.seed, args.reflectivity, etas, args.workers, args.inject_fault)
    lines = [c.line() for c in checks]
    failed = [c for c in checks if not c.ok]
    lines.append(f"{len(checks) - len(failed)}/{len(checks)} checks ok")
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


RECORD_COLUMNS = (
    "index", "alice_bit", "bob_bit", "loss_ab", "loss_ba", "eve_action", "eve_basis",
    "d4", "outcome", "outcome_pol", "sifted", "check", "eve_bit",
)
_OUTCOME_LABELS = {Outcome.D1: "D1", Outcome.D2: "D2", Outcome.D3: "D3", Outcome.D4: "D4-only",
                   Outcome.NO_CLICK: "none"}


def records_text(cfg: StrategyConfig) -> str:
    """Per-round dump, one whitespace-separated line per round.

    Booleans are 0/1; ``-`` marks a field that does not apply to the round
    (no adversary, no attack, no click, or a round that yielded no key bit).
    """
    c = simulate_columns(cfg)
    pol = "VH"
    lines = [
        f"# cfqkd records R={cfg.R:g} eta={cfg.eta:g} adversary={cfg.adversary.value} "
        f"seed={cfg.seed} rounds={cfg.n_rounds} check_fraction={cfg.check_fraction:g}",
        " ".join(RECORD_COLUMNS),
    ]
    sifted = c.sifted
    for k in range(len(c)):
        out = Outcome(int(c.outcome[k]))
        act = int(c.action[k])
        clicked = out in (Outcome.D1, Outcome.D2, Outcome.D3)
        key_round = sifted[k] and not c.check[k]
        lines.append(" ".join((
            str(int(c.index[k])),
            str(int(c.alice[k])),
            str(int(c.bob[k])),
            str(int(c.loss_ab[k])),
            str(int(c.loss_ba[k])),
            ACTION_NAMES[act],
            pol[c.eve_basis[k]] if act == ATTACK else "-",
            str(int(c.d4[k])),
            _OUTCOME_LABELS[out],
            pol[c.alice[k]] if clicked else "-",
            str(int(sifted[k])),
            str(int(c.check[k])),
            str(int(c.eve_bit[k])) if act != NO_EVE and key_round else "-",
        )))
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    adv = Adversary.auto(args.eta) if args.adversary == "auto" else Adversary(args.adversary)
    cfg = StrategyConfig.symmetric(
        args.reflectivity, eta=args.eta, adversary=adv, n_rounds=args.rounds,
        seed=args.seed, check_fraction=args.check_fraction,
    )
    _write_text(args.out, records_text(cfg))
    return EXIT_OK


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Keys use flag names."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value", EXIT_USAGE)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}", EXIT_USAGE)
        out[key] = _coerce(key, value, path, lineno)
    return out


def _coerce(key: str, value: str, path: str, lineno: int):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if key == "adversary" and value not in ADVERSARY_CHOICES:
            raise ValueError(value)
        return type(default)(value)
    except ValueError:
        raise CliError(f"{path}:{lineno}: bad value for {key}: {value!r}", EXIT_USAGE) from None


def _common(p: argparse.ArgumentParser, *, grid: bool = True) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--rounds", type=int, help="photons per Monte Carlo run (default 1000000)")
    p.add_argument("--seed", type=int, help="64-bit master seed (default 0)")
    p.add_argument("--reflectivity", type=float, help="beam-splitter reflectivity R; T = 1 - R (default 0.5)")
    p.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    p.add_argument("--out", help="output path, '-' for stdout (default stdout)")
    if grid:
        p.add_argument("--eta-start", type=float, help="first loss rate (default 0)")
        p.add_argument("--eta-end", type=float, help="last loss rate (default 1)")
        p.add_argument("--steps", type=int, help="number of loss rates")


def _adversary_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--adversary", choices=ADVERSARY_CHOICES,
                   help="Eve's strategy; auto picks s1 below 1/2 and s2 from 1/2 up")
    p.add_argument("--check-fraction", type=float, help="share of D1 clicks reserved for checks (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfqkd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="closed-form and Monte Carlo rates over a loss-rate grid, as CSV")
    _common(s)
    _adversary_flags(s)
    s.add_argument("--eve-flip", action="store_true", default=None,
                   help="invert Eve's key when she disagrees with Alice more than half the time")
    s.add_argument("--analytic-only", action="store_true", default=None, help="skip simulation")
    s.add_argument("--confidence", type=float, help="confidence level of the intervals (default 0.99)")
    s.add_argument("--source-rate", type=float, help="single photons per unit time (default 1)")
    s.add_argument("--plot", help="also write PLOT.dat and PLOT-{information,rates}.svg")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the algebraic, Monte Carlo and indistinguishability checks")
    _common(v)
    v.add_argument("--inject-fault", action="store_true",
                   help="swap Strategy II attack/block probabilities (the suite must then fail)")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("simulate", help="dump per-round records")
    _common(m, grid=False)
    _adversary_flags(m)
    m.add_argument("--eta", type=float, help="one-way loss rate (default 0)")
    m.set_defaults(func=cmd_simulate)
    return parser


COMMAND_DEFAULTS = {"sweep": {"steps": 51}, "verify": {"steps": 11}, "simulate": {"adversary": "none"}}


def _resolve(args) -> None:
    """Fill unset options: flag > config file > built-in default."""
    from_file = read_config(args.config) if args.config else {}
    defaults = {**DEFAULTS, **COMMAND_DEFAULTS[args.command]}
    for key, default in defaults.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, from_file.get(key, default))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _resolve(args)
        return args.func(args)
    except CliError as exc:
        print(f"cfqkd: {exc}", file=sys.stderr)
        return exc.code
    except InvalidParameterError as exc:
        print(f"cfqkd: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
