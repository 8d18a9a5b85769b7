from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldlab import fock
from heraldlab.errors import CutoffTooSmall, DomainError
from heraldlab.fock import DensityMatrix, FockVector, TwoModeState


def random_rho(cutoff, rank, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(cutoff + 1, rank)) + 1j * rng.normal(size=(cutoff + 1, rank))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


# ---------------------------------------------------------------- states


def test_vacuum_examples():
    assert np.array_equal(fock.vacuum(2).amps, [1, 0, 0])
    assert np.array_equal(fock.vacuum(0).amps, [1])
    assert fock.vacuum(40).norm == 1.0


def test_normalize_unit_norm():
    v = FockVector(np.arange(1, 6) + 1j).normalize()
    assert abs(v.norm - 1) < 1e-12


def test_db_conversion_matches_power_ratio():
    # e^{-2r} is the variance ratio, 10^{-dB/10}
    r = fock.db_to_r(3.0)
    assert math.isclose(r, math.log(10 ** (3 / 20)), rel_tol=1e-14)
    assert math.isclose(math.exp(-2 * r), 10 ** (-0.3), rel_tol=1e-14)
    assert math.isclose(fock.r_to_db(r), 3.0)


# ---------------------------------------------------------------- squeezing


def test_squeeze_zero_is_identity():
    assert np.allclose(fock.squeeze_op(0.0, 10), np.eye(11), atol=1e-14)


def test_squeezed_vacuum_variance_3db():
    r = fock.db_to_r(3.0)
    v = fock.squeezed_vacuum(r, 40)
    assert abs(fock.quadrature_variance(v) - math.exp(-2 * r) / 2) < 1e-6
    assert abs(fock.quadrature_variance(v) - 0.25059) < 1e-5
    # anti-squeezed quadrature
    assert abs(fock.quadrature_variance(v, math.pi / 2) - math.exp(2 * r) / 2) < 1e-6


def test_squeezed_vacuum_closed_form():
    # <2k|S(r)|0> = (-tanh r)^k sqrt((2k)!)/(2^k k!) / sqrt(cosh r), for S = exp[r(a^2 - a^dag^2)/2]
    r, c = 0.4, 40
    v = fock.squeezed_vacuum(r, c).amps
    for k in range(6):
        ref = (-math.tanh(r)) ** k * math.sqrt(math.factorial(2 * k)) / (2**k * math.factorial(k))
        ref /= math.sqrt(math.cosh(r))
        assert abs(v[2 * k] - ref) < 1e-10
        assert abs(v[2 * k + 1]) < 1e-14


@pytest.mark.parametrize("r", [0.1, -0.1, 0.05])
def test_squeeze_inverse_pair_inner_block(r):
    c = 40
    prod = fock.squeeze_op(r, c, columns=c // 2 + 1) @ fock.squeeze_op(-r, c, columns=c // 2 + 1)
    h = c // 2 + 1
    assert np.max(np.abs(prod[:h, :h] - np.eye(h))) < 1e-8


@pytest.mark.parametrize("r", [0.3, -0.6, 1.0])
def test_squeeze_interior_unitarity_bounded_by_leakage(r):
    # cropping a unitary leaves U^dag U - I on a block bounded by the column leakage
    c = 80
    h = c // 2 + 1
    full = fock.squeeze_op(r, c, columns=1)
    block = full[:, :h]
    dev = np.max(np.abs(block.conj().T @ block - np.eye(h)))
    assert dev <= fock.truncation_leakage(full, h) + 1e-12


def test_squeeze_cutoff_too_small():
    with pytest.raises(CutoffTooSmall):
        fock.squeeze_op(1.0, 40)


def test_gaussian_domain_guards():
    with pytest.raises(DomainError):
        fock.squeeze_op(0.1, 3)
    with pytest.raises(DomainError):
        fock.squeeze_op(2.5, 60)


# ---------------------------------------------------------------- displacement


def test_displace_zero_is_identity():
    assert np.allclose(fock.displace_op(0.0, 10), np.eye(11), atol=1e-14)


def test_displace_vacuum_overlap():
    d = fock.displace_op(0.2, 20)
    assert abs(abs(d[0, 0]) ** 2 - math.exp(-0.04)) < 1e-9


def test_displace_vacuum_is_coherent_state():
    alpha = 0.7 - 0.4j
    d = fock.displace_op(alpha, 30)
    assert np.allclose(d[:, 0], fock.coherent_state(alpha, 30).amps, atol=1e-12)


@pytest.mark.parametrize("alpha", [1.0, 0.5j, -0.6 + 0.6j])
def test_displace_inverse_and_unitarity_inner_block(alpha):
    c = 40
    h = c // 2 + 1
    d = fock.displace_op(alpha, c, columns=h)
    dm = fock.displace_op(-alpha, c, columns=h)
    assert np.max(np.abs((d @ dm)[:h, :h] - np.eye(h))) < 1e-8
    assert np.max(np.abs(d[:, :h].conj().T @ d[:, :h] - np.eye(h))) < 1e-8


# ---------------------------------------------------------------- beam splitter


def test_beam_splitter_identity_at_full_transmission():
    s = TwoModeState(random_rho(6, 1, 3).elems)  # any square complex array
    out = fock.beam_splitter(s, 1.0)
    assert np.allclose(out.amps, s.amps, atol=1e-14)


def test_hong_ou_mandel():
    s = TwoModeState.product(fock.fock_state(1, 5), fock.fock_state(1, 5))
    out = fock.beam_splitter(s, 0.5)
    assert abs(out.amps[1, 1]) < 1e-12
    assert abs(abs(out.amps[2, 0]) ** 2 - 0.5) < 1e-12
    assert abs(abs(out.amps[0, 2]) ** 2 - 0.5) < 1e-12


def test_single_photon_split():
    s = TwoModeState.product(fock.fock_state(1, 4), fock.vacuum(4))
    out = fock.beam_splitter(s, 0.5)
    assert abs(abs(out.amps[1, 0]) ** 2 - 0.5) < 1e-12
    assert abs(abs(out.amps[0, 1]) ** 2 - 0.5) < 1e-12


def test_beam_splitter_heisenberg_convention():
    # <a0> of |alpha>|0> after the splitter is sqrt(T) alpha
    c, alpha, T = 20, 0.8, 0.3
    s = TwoModeState.product(fock.coherent_state(alpha, c).normalize(), fock.vacuum(c))
    out = fock.beam_splitter(s, T)
    a = fock.annihilation(c)
    mean_a0 = np.vdot(out.amps, a @ out.amps)
    mean_a1 = np.vdot(out.amps, out.amps @ a.T)
    assert abs(mean_a0 - math.sqrt(T) * alpha) < 1e-9
    assert abs(abs(mean_a1) - math.sqrt(1 - T) * alpha) < 1e-9


def test_beam_splitter_rejects_bad_T():
    s = TwoModeState.product(fock.vacuum(4), fock.vacuum(4))
    with pytest.raises(DomainError):
        fock.beam_splitter(s, 1.2)


@settings(max_examples=25, deadline=None)
@given(T=st.floats(0.0, 1.0), seed=st.integers(0, 2**31))
def test_beam_splitter_conserves_norm_and_sectors(T, seed):
    c = 6
    rng = np.random.default_rng(seed)
    amps = np.zeros((c + 1, c + 1), dtype=complex)
    # keep total photon number <= c so nothing leaves the truncation
    for i in range(c + 1):
        for j in range(c + 1 - i):
            amps[i, j] = rng.normal() + 1j * rng.normal()
    amps /= np.linalg.norm(amps)
    out = fock.beam_splitter(TwoModeState(amps), T)
    assert abs(np.linalg.norm(out.amps) - 1) < 1e-10
    assert out.tail < 1e-20
    tot = np.add.outer(np.arange(c + 1), np.arange(c + 1))
    for n in range(c + 1):
        assert abs(np.sum(np.abs(amps[tot == n]) ** 2) - np.sum(np.abs(out.amps[tot == n]) ** 2)) < 1e-12


# ---------------------------------------------------------------- projection


def test_project_product_state():
    psi = FockVector(np.array([0.6, 0.8j, 0, 0, 0]))
    s = TwoModeState.product(psi, fock.fock_state(2, 4))
    vec, prob = fock.project_mode1(s, 2)
    assert np.allclose(vec.amps, psi.amps) and abs(prob - 1) < 1e-14
    assert fock.project_mode1(s, 1)[1] == 0.0


def test_projection_completeness():
    r = fock.db_to_r(3.0)
    s = TwoModeState.product(fock.squeezed_vacuum(r, 30), fock.squeezed_vacuum(-r, 30))
    s = fock.beam_splitter(s, 0.5)
    total = sum(fock.project_mode1(s, n)[1] for n in range(31))
    assert abs(total - np.linalg.norm(s.amps) ** 2) < 1e-12
    assert total > 1 - 1e-6


# ---------------------------------------------------------------- loss


def test_loss_identity_and_vacuum():
    rho = random_rho(6, 3, 1)
    assert np.allclose(fock.loss_channel(rho, 1.0).elems, rho.elems, atol=1e-14)
    out = fock.loss_channel(rho, 0.0).elems
    ref = np.zeros_like(out)
    ref[0, 0] = 1
    assert np.allclose(out, ref, atol=1e-14)


def test_loss_single_photon():
    out = fock.loss_channel(fock.fock_state(1, 3).to_density(), 0.67)
    assert np.allclose(np.diag(out.elems).real, [0.33, 0.67, 0, 0], atol=1e-12)


def test_loss_coherent_state_stays_coherent():
    # pure loss maps |alpha> to |sqrt(eta) alpha>
    c, alpha, eta = 40, 1.1 + 0.5j, 0.6
    out = fock.loss_channel(fock.coherent_state(alpha, c).to_density(), eta)
    ref = fock.coherent_state(math.sqrt(eta) * alpha, c)
    assert fock.fidelity(ref, out) > 1 - 1e-10


@pytest.mark.parametrize("eta", [0.1, 0.5, 0.93])
def test_loss_is_cptp(eta):
    out = fock.loss_channel(random_rho(8, 4, 7), eta)
    assert abs(out.trace - 1) < 1e-10
    assert np.min(np.linalg.eigvalsh(out.elems)) > -1e-9
    assert np.allclose(out.elems, out.elems.conj().T, atol=1e-12)


def test_loss_rejects_bad_eta():
    with pytest.raises(DomainError):
        fock.loss_channel(random_rho(3, 1, 0), 1.5)


# ---------------------------------------------------------------- Wigner


def test_wigner_origin_values():
    assert abs(fock.wigner(fock.vacuum(5), 0, 0) - 1 / math.pi) < 1e-14
    assert abs(fock.wigner(fock.fock_state(1, 5), 0, 0) + 1 / math.pi) < 1e-14


def test_wigner_normalization_on_grid():
    rho = random_rho(5, 2, 11)
    ax = np.linspace(-6, 6, 241)
    xx, pp = np.meshgrid(ax, ax, indexing="ij")
    w = fock.wigner(rho, xx, pp)
    assert abs(np.trapezoid(np.trapezoid(w, ax), ax) - 1) < 1e-3


def test_wigner_coherent_state_closed_form():
    # W = exp(-(x-x0)^2 - (p-p0)^2)/pi with x0 = sqrt2 Re(alpha), p0 = sqrt2 Im(alpha)
    alpha = 0.5 + 0.3j
    rho = fock.coherent_state(alpha, 30).normalize()
    x = np.linspace(-2, 2, 9)
    p = np.linspace(-1.5, 2, 9)
    xx, pp = np.meshgrid(x, p)
    x0, p0 = math.sqrt(2) * alpha.real, math.sqrt(2) * alpha.imag
    ref = np.exp(-((xx - x0) ** 2) - (pp - p0) ** 2) / math.pi
    assert np.allclose(fock.wigner(rho, xx, pp), ref, atol=1e-10)


def test_wigner_origin_parity_identity():
    rho = random_rho(10, 3, 5)
    assert abs(fock.wigner(rho, 0.0, 0.0) - fock.wigner_origin(rho)) < 1e-12


# ---------------------------------------------------------------- fidelity


def test_fidelity_examples():
    v = fock.coherent_state(0.3j, 10).normalize()
    assert abs(fock.fidelity(v, v) - 1) < 1e-12
    assert fock.fidelity(fock.fock_state(1, 4), fock.fock_state(2, 4)) == 0.0
    coh = fock.coherent_state(0.2, 20)
    assert abs(fock.fidelity(fock.vacuum(20), coh.normalize()) - math.exp(-0.04)) < 1e-12


def test_uhlmann_fidelity_of_commuting_states():
    p = np.array([0.5, 0.3, 0.2])
    q = np.array([0.2, 0.2, 0.6])
    ref = np.sum(np.sqrt(p * q)) ** 2
    assert abs(fock.fidelity(DensityMatrix(np.diag(p)), DensityMatrix(np.diag(q))) - ref) < 1e-12


def test_uhlmann_reduces_to_overlap_for_pure_states():
    a = FockVector(np.array([0.6, 0.8, 0, 0])).to_density()
    b = FockVector(np.array([0.8, 0, 0.6j, 0])).to_density()
    assert abs(fock.fidelity(a, b) - 0.48**2) < 1e-10
