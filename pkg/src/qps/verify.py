"""Cross-module property suites run by ``qps verify``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quasipure
from .errors import QpsError
from .linalg import fro
from .postselect import Povm, PovmElement, lossless_povm, validate_povm
from .qfi import (
    eigenvector_derivatives,
    ensemble_decomposition,
    qfi_from_sld,
    qfi_quasipure,
    sld_general,
    sld_quasipure,
)
from .sampling import random_ancilla_instance, random_mixed_family, random_povm, rng_for
from .state import density_at, derivative_at, spectral_at

INEQ_TOL = 1e-8
EQUIV_TOL = 1e-8
CLOSED_FORM_RTOL = 1e-7
SATURATION_RTOL = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    counterexample: dict | None = None

    @property
    def ok(self) -> bool:
        return self.passed == self.total


@dataclass
class VerifyResult:
    seed: int
    trials: int
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)


def _inequality_trial(seed, t):
    rng = rng_for(seed, 1, t)
    d = int(rng.integers(2, 5))
    rank = int(rng.integers(1, d + 1))
    S = random_mixed_family(d, rng, rank)
    x = float(rng.uniform(-1, 1))
    povm = random_povm(d, rng)
    rep = ensemble_decomposition(S, x, povm)
    slack = INEQ_TOL * max(1.0, rep.qfi)
    ok = rep.kept_qfi <= rep.total_ensemble_qfi + slack and rep.total_ensemble_qfi <= rep.qfi + slack
    return ok, {"dim": d, "rank": rank, "x": x, "qfi": rep.qfi,
                "total_ensemble_qfi": rep.total_ensemble_qfi, "kept_qfi": rep.kept_qfi}


_PERTURBATIONS = ("labels", "weights", "both")


def _ancilla_case(seed, stream, t):
    rng = rng_for(seed, stream, t)
    quasi = t % 2 == 0
    rank = int(rng.integers(2, 4))
    d_s = rank + int(rng.integers(1, 3))
    perturb = None if quasi else _PERTURBATIONS[(t // 2) % 3]
    S, fam, _ = random_ancilla_instance(
        rng, d_s=d_s, rank=rank, degenerate=quasi and t % 10 == 0, perturb=perturb
    )
    return S, fam, float(rng.uniform(-1, 1)), quasi, {"d_s": d_s, "rank": rank, "perturb": perturb}


def _criteria_trial(seed, t):
    S, fam, x, quasi, info = _ancilla_case(seed, 2, t)
    rep = quasipure.criteria_report(S, x, fam.evaluate(x), tol=EQUIV_TOL)
    info.update(
        x=x,
        expected_quasipure=quasi,
        residual_spectral=rep.residual_spectral,
        eigenvalue_drift=rep.eigenvalue_drift,
        gencoder_residual=rep.gencoder_residual,
        convex_residual=rep.convex_residual,
        verdicts=[rep.verdict, rep.verdict_obs1, rep.verdict_obs2, rep.verdict_convex],
    )
    return rep.consistent and rep.verdict == quasi, info


def _closed_form_trial(seed, t):
    S, _, x, _, info = _ancilla_case(seed, 3, 2 * t)
    rho = density_at(S, x)
    drho = derivative_at(S, x)
    sp = spectral_at(S, x)
    der = eigenvector_derivatives(sp, drho)
    Lg = sld_general(rho, drho)
    Lq = sld_quasipure(sp, der, drho)
    Ig = qfi_from_sld(rho, Lg)
    Iq = qfi_quasipure(sp, der, drho)
    sld_err = fro(Lq - Lg) / max(fro(Lg), 1e-300)
    qfi_err = abs(Iq - Ig) / max(1.0, Ig)
    info.update(x=x, sld_rel_err=sld_err, qfi_rel_err=qfi_err)
    return sld_err < CLOSED_FORM_RTOL and qfi_err < CLOSED_FORM_RTOL, info


def _saturation_trial(seed, t):
    S, _, x, _, info = _ancilla_case(seed, 4, 2 * t)
    lam = float(10 ** -np.random.default_rng([seed, 4, t, 1]).uniform(1, 4))
    povm = lossless_povm(S, x, lam)
    rep = ensemble_decomposition(S, x, povm)
    err = abs(rep.kept_qfi - rep.qfi) / max(1.0, rep.qfi)
    info.update(x=x, lam=lam, qfi=rep.qfi, kept_qfi=rep.kept_qfi)
    return err < SATURATION_RTOL, info


def _povm_trial(seed, t):
    S, _, x, _, info = _ancilla_case(seed, 5, 2 * t)
    rng = rng_for(seed, 5, t, 1)
    lam = float(rng.uniform(0.01, 0.3))
    built = [lossless_povm(S, x, lam, mode) for mode in ("kernel_binary", "tangent_binary", "multiparam")]
    built.append(lossless_povm(S, x, [lam / 2, lam], "multi"))
    built.append(lossless_povm(S, x, [lam / 2, lam], "multiparam", mu=[0.3, 0.7]))
    for povm in built:
        validate_povm(povm)
    info.update(x=x, lam=lam)
    return True, info


def broken_povm(d: int) -> Povm:
    """Negative control: two elements summing to 1.1 * I."""
    return Povm(
        [PovmElement("a", 0.6 * np.eye(d, dtype=complex), True),
         PovmElement("b", 0.5 * np.eye(d, dtype=complex), False)],
        "broken",
    )


def _run(name: str, trials: int, seed: int, fn: Callable) -> SuiteResult:
    res = SuiteResult(name)
    for t in range(trials):
        res.total += 1
        try:
            ok, info = fn(seed, t)
        except QpsError as exc:
            ok, info = False, {"error": f"{type(exc).__name__}: {exc}"}
        if ok:
            res.passed += 1
        elif res.counterexample is None:
            res.counterexample = {"suite": name, "seed": seed, "trial": t, **info}
    return res


def verify_suite(trials: int, seed: int, inject_broken_povm: bool = False) -> VerifyResult:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    out = VerifyResult(seed, trials)
    out.suites.append(_run("postselection-inequality", trials, seed, _inequality_trial))
    out.suites.append(_run("criteria-equivalence", trials, seed, _criteria_trial))
    out.suites.append(_run("quasipure-closed-forms", trials, seed, _closed_form_trial))
    out.suites.append(_run("lossless-saturation", max(1, trials // 10), seed, _saturation_trial))
    povm_suite = _run("povm-validity", max(1, trials // 10), seed, _povm_trial)
    if inject_broken_povm:
        povm_suite.total += 1
        try:
            validate_povm(broken_povm(4))
            povm_suite.passed += 1
        except QpsError as exc:
            if povm_suite.counterexample is None:
                povm_suite.counterexample = {
                    "suite": "povm-validity", "seed": seed, "trial": "injected",
                    "error": f"{type(exc).__name__}: {exc}",
                    "elements": {"a": "0.6*I", "b": "0.5*I"},
                }
    out.suites.append(povm_suite)
    return out
