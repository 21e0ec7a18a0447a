"""Command-line front end: sweeps over x, CSV output and the verification runner.

Exit codes: 0 success, 1 usage error, 2 numerical tolerance failure,
3 configuration parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .apps import (
    SuperresConfig,
    ancilla_qfi,
    ancilla_state,
    superres_qfi,
    superres_state,
    superres_theory,
    two_qubit_state,
)
from .errors import LambdaOutOfRange, QpsError
from .postselect import lossless_povm, postselection_report
from .sampling import random_unitary_family, rng_for
from .verify import verify_suite

EXIT_OK, EXIT_USAGE, EXIT_TOLERANCE, EXIT_CONFIG = 0, 1, 2, 3

HEADER = ("x", "p_success", "eps0", "eps1", "eps0_theory", "eps1_theory", "qfi_rho", "qfi_post", "ratio")
COMMANDS = ("superres", "two-qubit", "ancilla", "verify")

SLOPE_RTOL = 0.02
RATIO_TOL = 1e-5
SUPERRES_QFI_TOL = 1e-6
UNITARY_QFI_TOL = 1e-8
# eps1 turns over beyond the leading-order regime; monotonicity is checked below this x
MONOTONE_X_MAX = 0.1


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    q: float = 0.3
    sigma: float = 1.0
    lam: float | None = None
    q1: float = 0.3
    dim_s: int = 4
    rank: int = 3
    dim_a: int | None = None
    seed: int = 0
    x_min: float = 1e-4
    x_max: float = 1e-1
    points: int = 40
    log: bool = False
    x: float | None = None
    x_star: float | None = None
    h: float | None = None
    n_max: int = 30
    norm: str | None = None
    fit_max: float = 1e-2
    output: str | None = None
    svg: str | None = None
    trials: int = 1000
    inject_broken_povm: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command == "verify":
            if self.trials < 1:
                raise UsageError(f"trials must be at least 1, got {self.trials}")
            return
        if not 0.0 < self.lambda_ < 1.0:
            raise LambdaOutOfRange(f"lambda must lie in (0, 1), got {self.lambda_!r}")
        if self.x is None:
            if self.x_min <= 0:
                raise UsageError(f"x_min must be positive, got {self.x_min}")
            if self.x_max <= self.x_min:
                raise UsageError("x_max must exceed x_min")
            if self.points < 2:
                raise UsageError(f"points must be at least 2, got {self.points}")
        if self.norm_kind not in ("frobenius", "spectral"):
            raise UsageError(f"unknown norm {self.norm_kind!r}")
        if self.command == "superres" and not (0 < self.q < 1 and self.sigma > 0):
            raise UsageError("superres needs 0 < q < 1 and sigma > 0")
        if self.command == "two-qubit" and not 0 < self.q1 < 1:
            raise UsageError("two-qubit needs 0 < q1 < 1")
        if self.command == "ancilla" and not 1 <= self.rank <= self.dim_s:
            raise UsageError("ancilla needs 1 <= rank <= dim_s")

    @property
    def lambda_(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        return 1e-4 if self.command == "two-qubit" else 1e-2

    @property
    def norm_kind(self) -> str:
        if self.norm:
            return self.norm
        return "spectral" if self.command == "two-qubit" else "frobenius"

    def grid(self) -> np.ndarray:
        if self.x is not None:
            return np.array([float(self.x)])
        if self.log:
            return np.geomspace(self.x_min, self.x_max, self.points)
        return np.linspace(self.x_min, self.x_max, self.points)

    def star(self) -> float:
        """Single points default to x_star = x, sweeps to the Rayleigh limit x_star = 0."""
        if self.x_star is not None:
            return float(self.x_star)
        return float(self.x) if self.x is not None else 0.0


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_KEY_ALIASES = {"lambda": "lam", "log_spacing": "log"}


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    out = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = value
    return out


def _coerce(values: dict) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for k, v in values.items():
        if v is None:
            out[k] = None
            continue
        t = types[k]
        try:
            if "bool" in t:
                if not isinstance(v, bool):
                    raise TypeError
                out[k] = v
            elif "int" in t:
                if isinstance(v, bool) or float(v) != int(v):
                    raise TypeError
                out[k] = int(v)
            elif "float" in t:
                if isinstance(v, bool):
                    raise TypeError
                out[k] = float(v)
            else:
                out[k] = str(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {k!r} has invalid value {v!r}") from exc
    return out


@dataclass
class SweepResult:
    rows: list[tuple]
    summary: list[str] = field(default_factory=list)
    ok: bool = True


def _build_app(cfg: RunConfig, xs: np.ndarray):
    """Return ``(state, expected_qfi or None, theory_available)``."""
    if cfg.command == "superres":
        # margin keeps finite-difference stencils inside the domain
        reach = 1.05 * float(max(np.max(np.abs(xs)), abs(cfg.star()), 1e-12)) + 10 * (cfg.h or 1e-5)
        S = superres_state(SuperresConfig(cfg.q, cfg.sigma, cfg.n_max, reach))
        return S, superres_qfi(cfg.sigma), cfg.star() == 0.0
    if cfg.command == "two-qubit":
        return two_qubit_state(cfg.q1), 4.0, False
    F = random_unitary_family(cfg.dim_s, rng_for(cfg.seed, 0), cfg.rank)
    d_a = cfg.rank if cfg.dim_a is None else cfg.dim_a
    S = ancilla_state(F, d_a)
    return S, ancilla_qfi(F), False


def _fit_slope(xs: np.ndarray, ys: np.ndarray) -> float:
    """Least-squares slope of ``y = a x`` through the origin."""
    return float(np.dot(xs, ys) / np.dot(xs, xs))


def _fit_exponent(xs: np.ndarray, ys: np.ndarray) -> float:
    mask = ys > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[mask]), np.log(ys[mask]), 1)[0])


def run_sweep(cfg: RunConfig) -> SweepResult:
    cfg.validate()
    xs = cfg.grid()
    S, expected_qfi, with_theory = _build_app(cfg, xs)
    x_star = cfg.star()
    lam = cfg.lambda_
    povm = None if cfg.x is not None and cfg.x_star is None else lossless_povm(S, x_star, lam)

    rows = []
    for x in xs:
        rep = postselection_report(S, float(x), x_star if povm is not None else float(x), lam,
                                   cfg.norm_kind, cfg.h, povm=povm)
        if with_theory:
            t0, t1 = superres_theory(abs(float(x)), cfg.q, lam, cfg.sigma)
        else:
            t0 = t1 = None
        rows.append((float(x), rep.p_success, rep.eps0, rep.eps1, t0, t1,
                     rep.qfi_rho, rep.qfi_post, rep.amplification_ratio))

    res = SweepResult(rows)
    arr = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
    res.summary.append(
        f"{cfg.command}: {len(rows)} point(s), lambda={lam:g}, x_star={x_star:g}, norm={cfg.norm_kind}"
    )

    def verdict(name: str, passed: bool, detail: str) -> None:
        res.summary.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        res.ok = res.ok and passed

    qerr = float(np.max(np.abs(arr[:, 6] - expected_qfi)))
    qtol = SUPERRES_QFI_TOL if cfg.command == "superres" else UNITARY_QFI_TOL * max(1.0, expected_qfi)
    if cfg.command != "superres" or np.min(np.abs(xs)) >= 1e-2:
        verdict("qfi_rho", qerr <= qtol, f"max |qfi_rho - {expected_qfi:.12g}| = {qerr:.3e} (tol {qtol:.0e})")

    # exact quasi-purity, hence lossless amplification, holds only for the unitary apps
    at_star = np.flatnonzero(xs == x_star) if povm is not None else np.arange(len(xs))
    if cfg.command != "superres" and at_star.size:
        rerr = float(np.max(np.abs(arr[at_star, 8] - 1.0)))
        verdict("amplification", rerr <= RATIO_TOL, f"|ratio - 1| = {rerr:.3e} at x = x_star")

    window = (xs > 0) & (xs <= cfg.fit_max)
    if len(xs) >= 2 and window.sum() >= 2:
        xw = xs[window]
        for col, name in ((2, "eps0"), (3, "eps1")):
            slope = _fit_slope(xw, arr[window, col])
            expo = _fit_exponent(xw, arr[window, col])
            line = f"{name}: slope {slope:.6g}, log-log exponent {expo:.4f} over x <= {cfg.fit_max:g}"
            res.summary.append(line)
            if with_theory:
                theory = _fit_slope(xw, arr[window, col + 2])
                if theory > 0:
                    rel = abs(slope / theory - 1.0)
                    verdict(f"{name} slope", rel <= SLOPE_RTOL,
                            f"{slope:.6g} vs leading order {theory:.6g} (rel {rel:.3e})")
                    sel = arr[xs <= MONOTONE_X_MAX, col]
                    inc = bool(np.all(np.diff(sel) > 0))
                    verdict(f"{name} monotone", inc,
                            f"{'increasing' if inc else 'not increasing'} for x <= {MONOTONE_X_MAX:g}")
            elif x_star == 0.0:
                verdict(f"{name} vanishing", expo > 0.5, f"exponent {expo:.4f} > 0.5")
    return res


def _fmt(v) -> str:
    return "" if v is None else "%.17g" % v


def format_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def render_svg(rows: Sequence[tuple], path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arr = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(arr[:, 0], arr[:, 2], label="eps0")
    ax.loglog(arr[:, 0], arr[:, 3], label="eps1")
    if not np.all(np.isnan(arr[:, 4])):
        ax.loglog(arr[:, 0], arr[:, 4], "--", label="eps0 leading order")
        ax.loglog(arr[:, 0], arr[:, 5], "--", label="eps1 leading order")
    ax.set_xlabel("x")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with keys mirroring the flags")
    common.add_argument("--seed", type=int, help="RNG seed (default: $QPS_SEED or 0)")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--lambda", dest="lam", type=float, help="postselection weight in (0, 1)")
    sweep.add_argument("--x", type=float, help="evaluate a single point (x_star defaults to x)")
    sweep.add_argument("--x-star", type=float, help="point where the POVM is built (sweeps default to 0)")
    sweep.add_argument("--x-min", type=float)
    sweep.add_argument("--x-max", type=float)
    sweep.add_argument("--points", type=int)
    sweep.add_argument("--log", action="store_true", default=None, help="logarithmic x spacing")
    sweep.add_argument("--h", type=float, help="finite-difference step for d rho (default analytic)")
    sweep.add_argument("--norm", choices=("frobenius", "spectral"))
    sweep.add_argument("--fit-max", type=float, help="upper end of the small-x fit window")
    sweep.add_argument("-o", "--output", help="CSV path (default stdout)")
    sweep.add_argument("--svg", help="optional log-log plot of the eps columns")

    p = _Parser(prog="qps", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("superres", parents=[common, sweep], help="two-point-source imaging")
    s.add_argument("--q", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--n-max", type=int, help="Hermite-Gaussian truncation")
    t = sub.add_parser("two-qubit", parents=[common, sweep], help="two-qubit unitary encoding")
    t.add_argument("--q1", type=float)
    a = sub.add_parser("ancilla", parents=[common, sweep], help="random ancilla-protocol instance")
    a.add_argument("--dim-s", type=int)
    a.add_argument("--rank", type=int)
    a.add_argument("--dim-a", type=int)
    v = sub.add_parser("verify", parents=[common], help="run the property suites")
    v.add_argument("--trials", type=int)
    v.add_argument("--inject-broken-povm", action="store_true", default=None,
                   help="add a POVM whose elements do not sum to I (negative control)")
    return p


def config_from_args(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values = {}
    if args.config:
        values.update(load_config_file(args.config))
        if values.pop("command", args.command) != args.command:
            raise ConfigError("config command does not match the subcommand")
    values.update({k: v for k, v in vars(args).items()
                   if k in _FIELD_NAMES and k != "command" and v is not None})
    if values.get("seed") is None:
        env = environ.get("QPS_SEED")
        if env is not None:
            try:
                values["seed"] = int(env)
            except ValueError as exc:
                raise ConfigError(f"QPS_SEED is not an integer: {env!r}") from exc
    return RunConfig(command=args.command, **_coerce(values))


def _run_verify(cfg: RunConfig, out) -> int:
    res = verify_suite(cfg.trials, cfg.seed, cfg.inject_broken_povm)
    for s in res.suites:
        print(f"{'PASS' if s.ok else 'FAIL'} {s.name}: {s.passed}/{s.total}", file=out)
    if res.ok:
        return EXIT_OK
    for s in res.suites:
        if s.counterexample is not None:
            print(json.dumps(s.counterexample, sort_keys=True, default=float), file=out)
    return EXIT_TOLERANCE


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, QpsError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if cfg.command == "verify":
        return _run_verify(cfg, sys.stdout)

    try:
        res = run_sweep(cfg)
    except QpsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = format_csv(res.rows)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        summary_out = sys.stdout
    else:
        sys.stdout.write(text)
        summary_out = sys.stderr
    if cfg.svg:
        render_svg(res.rows, cfg.svg)
    for line in res.summary:
        print(line, file=summary_out)
    return EXIT_OK if res.ok else EXIT_TOLERANCE
