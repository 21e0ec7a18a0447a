import numpy as np
import pytest

from qps.apps import superres_theory
from qps.errors import (
    IncompletePovm,
    InvalidPovm,
    InvalidState,
    LambdaOutOfRange,
    NonPositiveInput,
    NotAProjector,
    NotUnitary,
    ZeroSuccessProbability,
)
from qps.linalg import dagger, fro
from qps.postselect import (
    MODES,
    Povm,
    PovmElement,
    apply_measurement,
    build_povm,
    lossless_povm,
    matrix_norm,
    measurement_from_povm,
    postselected_derivative_fd,
    postselection_report,
    saturation_threshold,
    validate_povm,
)
from qps.qfi import ensemble_decomposition, qfi
from qps.sampling import random_ancilla_instance, random_density, random_unitary, rng_for
from qps.state import density_at, derivative_at, spectral_at, tangent_projector


def random_projector_pair(d, r, rng):
    V = random_unitary(d, rng)
    return V[:, :r] @ dagger(V[:, :r]), V[:, r:] @ dagger(V[:, r:])


def test_lambda_one_rejected():
    Pr, Pk = random_projector_pair(3, 1, np.random.default_rng(0))
    with pytest.raises(LambdaOutOfRange):
        build_povm("kernel_binary", Pr, Pk, lam=1.0)
    with pytest.raises(LambdaOutOfRange):
        build_povm("kernel_binary", Pr, Pk, lam=0.0)


def test_superres_tangent_povm_rayleigh(superres):
    lam = 0.01
    E = lossless_povm(superres, 0.0, lam).kept[0].E
    target = np.zeros((30, 30), complex)
    target[1, 1] = 1
    target[0, 0] = lam
    assert fro(E - target) < 1e-8


def test_multi_povm_complete(rng):
    Pr, Pk = random_projector_pair(5, 2, rng)
    povm = build_povm("multi", Pr, Pk, lam=[0.01, 0.02], mu=[0.5, 0.5])
    assert fro(sum(e.E for e in povm.elements) - np.eye(5)) < 1e-12
    assert all(np.linalg.eigvalsh(e.E).min() >= -1e-12 for e in povm.elements)
    assert len(povm.kept) == 2 and len(povm.discarded) == 1


@pytest.mark.parametrize("mode", MODES)
def test_every_mode_complete_and_kraus_consistent(mode, rng):
    if mode == "pure":
        Pr, rest = random_projector_pair(3, 1, rng)
        aux = random_projector_pair(2, 1, rng)[0]
        W = rest @ np.linalg.qr(rng.normal(size=(3, 3)))[0]
        v = rest @ rng.normal(size=3)
        aux = np.outer(v, v.conj()) / np.vdot(v, v)
    else:
        Pr, aux = random_projector_pair(4, 2, rng)
    lam = [0.05, 0.1] if mode in ("multi", "multiparam") else 0.05
    povm = build_povm(mode, Pr, None if mode == "multiparam" else aux, lam)
    validate_povm(povm)
    U = random_unitary(Pr.shape[0], rng)
    for el in povm.elements:
        for u in (None, U):
            M = measurement_from_povm(el.E, u).M
            assert fro(dagger(M) @ M - el.E) < 1e-10


def test_measurement_operator_forms(rng):
    Pr, Pk = random_projector_pair(4, 2, rng)
    assert fro(measurement_from_povm(Pk).M - Pk) < 1e-12
    assert fro(measurement_from_povm(Pk + 0.04 * Pr).M - (Pk + 0.2 * Pr)) < 1e-12
    E = random_density(4, rng)
    U = random_unitary(4, rng)
    M = measurement_from_povm(E, U)
    assert fro(dagger(M.M) @ M.M - E) < 1e-10
    with pytest.raises(NotUnitary):
        measurement_from_povm(E, 2 * U)


def test_apply_identity(rng):
    rho = random_density(3, rng)
    sigma, p = apply_measurement(np.eye(3), rho)
    assert fro(sigma - rho) < 1e-14 and abs(p - 1) < 1e-14


def test_apply_quasipure_at_star(two_qubit):
    lam = 1e-4
    x = 0.3
    povm = lossless_povm(two_qubit, x, lam)
    M = measurement_from_povm(povm.kept[0].E)
    rho = density_at(two_qubit, x)
    sigma, p = apply_measurement(M, rho)
    assert abs(p - lam) < 1e-12
    assert fro(sigma - rho) < 1e-10


def test_apply_zero_probability():
    with pytest.raises(ZeroSuccessProbability):
        apply_measurement(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))


def test_two_qubit_amplification(two_qubit):
    rep = postselection_report(two_qubit, 0.2, 0.2, 1e-4, "spectral")
    assert abs(rep.qfi_post - 4e4) < 4e4 * 1e-3
    assert abs(rep.amplification_ratio - 1) < 1e-5
    assert rep.eps0 < 1e-9 and rep.eps1 < 1e-6
    assert 0 <= rep.p_success <= 1


def test_superres_rayleigh_errors_leading_order(superres):
    x, lam = 1e-3, 0.01
    rep = postselection_report(superres, x, 0.0, lam)
    t0, t1 = superres_theory(x, 0.3, lam, 1.0)
    assert abs(rep.eps0 / t0 - 1) < 0.02 and abs(rep.eps1 / t1 - 1) < 0.02
    assert abs(rep.eps0 / x - 1.27279) < 0.02 * 1.27279
    assert abs(rep.eps1 / x - 15.9589) < 0.02 * 15.9589


def test_superres_rebuilt_at_x_is_not_lossless(superres):
    # the imaging state has rank 2 at x > 0, so a POVM rebuilt at x_star = x
    # discards most of the information carried by the small eigenvalue
    rep = postselection_report(superres, 1e-3, 1e-3, 0.01)
    assert rep.amplification_ratio < 0.5


def test_dsigma_quotient_vs_fd(superres):
    rep_q = postselection_report(superres, 0.01, 0.0, 0.01)
    rep_f = postselection_report(superres, 0.01, 0.0, 0.01, dsigma_method="fd")
    assert fro(rep_q.dsigma - rep_f.dsigma) < 1e-6 * max(1.0, fro(rep_q.dsigma))
    with pytest.raises(ValueError):
        postselection_report(superres, 0.01, 0.0, 0.01, dsigma_method="bogus")


def test_unitary_part_irrelevant():
    S, _, _ = random_ancilla_instance(rng_for(6), d_s=3, rank=2)
    x = 0.25
    povm = lossless_povm(S, x, 0.05)
    base = postselection_report(S, x, x, 0.05, povm=povm)
    for t in range(3):
        U = random_unitary(S.dim, rng_for(6, t))
        rep = postselection_report(S, x, x, 0.05, povm=povm, U=U)
        assert abs(rep.qfi_post - base.qfi_post) < 1e-9 * max(1.0, base.qfi_post)


@pytest.mark.parametrize("mode", ["kernel_binary", "tangent_binary", "multi", "multiparam"])
def test_lossless_saturation_quasipure(mode):
    S, _, _ = random_ancilla_instance(rng_for(7), d_s=4, rank=3)
    x = -0.4
    lam = [0.01, 0.03] if mode in ("multi", "multiparam") else 0.01
    rep = ensemble_decomposition(S, x, lossless_povm(S, x, lam, mode))
    assert abs(rep.kept_qfi - rep.qfi) < 1e-5 * rep.qfi


def test_pure_mode_requires_rank_one(two_qubit):
    with pytest.raises(InvalidState):
        lossless_povm(two_qubit, 0.1, 0.1, "pure")


def test_prior_knowledge_sensitivity(two_qubit):
    x_star = 0.2
    deltas = np.geomspace(1e-6, 1e-1, 8)
    e0 = [postselection_report(two_qubit, x_star + d, x_star, 1e-2).eps0 for d in deltas]
    assert postselection_report(two_qubit, x_star, x_star, 1e-2).eps0 < 1e-7
    assert np.all(np.diff(e0) > 0)


def test_extra_operator_keeps_qfi():
    S, _, _ = random_ancilla_instance(rng_for(8), d_s=4, rank=2, d_a=2)
    x = 0.1
    sp = spectral_at(S, x)
    Pt = tangent_projector(S, x, sp)
    Pc = np.eye(S.dim) - sp.support_projector - Pt
    assert np.trace(Pc).real > 0.5
    plain = ensemble_decomposition(S, x, lossless_povm(S, x, 0.02))
    extra = ensemble_decomposition(S, x, lossless_povm(S, x, 0.02, extra=0.5 * Pc))
    assert abs(plain.kept_qfi - extra.kept_qfi) < 1e-8
    with pytest.raises(InvalidPovm):
        lossless_povm(S, x, 0.02, extra=sp.support_projector)
    with pytest.raises(IncompletePovm):
        lossless_povm(S, x, 0.02, extra=2 * Pc)


def test_build_povm_errors(rng):
    Pr, Pk = random_projector_pair(3, 1, rng)
    with pytest.raises(ValueError):
        build_povm("bogus", Pr, Pk)
    with pytest.raises(NotAProjector):
        build_povm("kernel_binary", 0.5 * Pr, Pk)
    with pytest.raises(NotAProjector):
        build_povm("tangent_binary", Pr, None)
    with pytest.raises(NotAProjector):
        build_povm("tangent_binary", Pr, Pr)
    with pytest.raises(InvalidPovm):
        build_povm("multi", Pr, Pk, lam=[0.1, 0.2], mu=[0.5, 0.6])
    with pytest.raises(InvalidPovm):
        build_povm("tangent_binary", Pr, Pk, lam=[0.1, 0.2])
    with pytest.raises(NotAProjector):
        build_povm("pure", Pr, Pk)


def test_validate_povm_rejects():
    with pytest.raises(InvalidPovm):
        validate_povm(Povm([]))
    with pytest.raises(InvalidPovm):
        validate_povm(Povm([PovmElement("a", np.diag([1.5, -0.5]).astype(complex), True)]))
    bad_kraus = PovmElement("a", np.eye(2, dtype=complex), True, kraus=2 * np.eye(2))
    with pytest.raises(InvalidPovm):
        validate_povm(Povm([bad_kraus]))


def test_matrix_norms():
    A = np.diag([3.0, 4.0])
    assert matrix_norm(A, "frobenius") == pytest.approx(5.0)
    assert matrix_norm(A, "spectral") == pytest.approx(4.0)
    with pytest.raises(ValueError):
        matrix_norm(A, "nuclear")


def test_fd_postselected_derivative_matches_quotient(two_qubit):
    M = measurement_from_povm(lossless_povm(two_qubit, 0.0, 0.1).kept[0].E).M
    rho, dr = density_at(two_qubit, 0.05), derivative_at(two_qubit, 0.05)
    from qps.qfi import postselected_state

    _, _, ds, _ = postselected_state(M, rho, dr)
    assert fro(postselected_derivative_fd(M, two_qubit, 0.05) - ds) < 1e-8


def test_saturation_threshold():
    th = saturation_threshold(1e8, 1.0, 1e6)
    assert th.n_cr == 1e6 and th.lambda_max == pytest.approx(0.01) and th.advantageous
    th = saturation_threshold(5.0, 1.0, 5.0)
    assert th.lambda_max == 1.0 and not th.advantageous
    th = saturation_threshold(1.0, 1.0, 5.0)
    assert th.lambda_max == 1.0 and not th.advantageous
    with pytest.raises(NonPositiveInput):
        saturation_threshold(0, 1, 1)


def test_rank_drop_warning_at_rayleigh_limit(superres, caplog):
    with caplog.at_level("WARNING", logger="qps.postselect"):
        lossless_povm(superres, 0.0, 0.01)
    assert "rank of rho drops" in caplog.text


def test_no_rank_drop_warning_away_from_zero(superres, two_qubit, caplog):
    with caplog.at_level("WARNING", logger="qps.postselect"):
        lossless_povm(superres, 0.3, 0.01)
        lossless_povm(two_qubit, 0.0, 0.01)
    assert caplog.text == ""
