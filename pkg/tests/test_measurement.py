from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats
from scipy.signal import filtfilt, firwin
from scipy.special import eval_hermite

from heraldlab import fock, measurement as ms, rng
from heraldlab import waveform as wf
from heraldlab.errors import DomainError, GridMismatch, InsufficientFrames
from heraldlab.measurement import FrameSource, PhaseSet
from heraldlab.waveform import TimeGrid


@pytest.fixture(scope="module")
def small_grid():
    return TimeGrid.span(0.0, 200e-9)


@pytest.fixture(scope="module")
def small_mode(small_grid):
    return wf.builtin_waveforms("square_pulse_modulated", small_grid, width=60e-9)


def test_phase_set_defaults():
    ph = PhaseSet()
    assert len(ph) == 12
    assert np.allclose(np.rad2deg(ph.phases), np.arange(0, 180, 15))
    assert np.allclose(PhaseSet.uniform(4).phases, [0, np.pi / 4, np.pi / 2, 3 * np.pi / 4])
    with pytest.raises(DomainError):
        PhaseSet(np.array([0.0, 4.0]))


def test_hermite_functions_closed_form():
    x = np.linspace(-4, 4, 33)
    psi = ms.hermite_functions(8, x)
    for n in range(9):
        ref = eval_hermite(n, x) * np.exp(-x * x / 2) / math.sqrt(2**n * math.factorial(n) * math.sqrt(math.pi))
        assert np.allclose(psi[n], ref, atol=1e-12)


def test_hermite_functions_orthonormal():
    x, w = np.polynomial.hermite.hermgauss(60)
    psi = ms.hermite_functions(10, x) * np.exp(x * x / 2)
    gram = (psi * w) @ psi.T
    assert np.allclose(gram, np.eye(11), atol=1e-10)


def test_marginal_vacuum_and_single_photon():
    x = np.linspace(-5, 5, 201)
    vac = ms.marginal_pdf(fock.vacuum(5), 0.3, x)
    assert np.allclose(vac, np.exp(-x * x) / math.sqrt(math.pi), atol=1e-14)
    one = ms.marginal_pdf(fock.fock_state(1, 5), 1.1, x)
    assert np.allclose(one, 2 * x * x * np.exp(-x * x) / math.sqrt(math.pi), atol=1e-14)


def test_marginal_coherent_mean():
    # x_theta = x cos theta + p sin theta; |i> has <p> = sqrt(2)
    x = np.linspace(-8, 8, 4001)
    coh = fock.coherent_state(1j, 30).normalize()
    for theta, ref in [(0.0, 0.0), (math.pi / 2, math.sqrt(2)), (math.pi / 4, 1.0)]:
        pdf = ms.marginal_pdf(coh, theta, x)
        assert abs(np.trapezoid(pdf, x) - 1) < 1e-9
        assert abs(np.trapezoid(x * pdf, x) - ref) < 1e-9


def test_sample_quadratures_ks():
    rho = fock.loss_channel(fock.fock_state(1, 10).to_density(), 0.67)
    x = ms.sample_quadratures(rho, 0.0, 20000, rng.stream(1, 9))
    grid = np.linspace(-8, 8, 8001)
    cdf = np.cumsum(ms.marginal_pdf(rho, 0.0, grid)) * (grid[1] - grid[0])
    res = stats.kstest(x, lambda v: np.interp(v, grid, cdf / cdf[-1]))
    assert res.pvalue > 1e-3
    # second moment of the lossy photon: <x^2> = 1/2 + eta
    assert abs(np.mean(x**2) - (0.5 + 0.67)) < 0.04


def test_frame_source_embeds_quadrature_exactly(small_grid, small_mode):
    src = FrameSource(fock.fock_state(1, 10).to_density(), small_mode, 0.8, PhaseSet.uniform(2), 300, seed=5,
                      chunk=128)
    blocks = list(src.chunks())
    assert [k for k, _ in blocks] == [0, 0, 0, 1, 1, 1]
    q = np.concatenate([ms.extract_quadrature(b, small_mode) for k, b in blocks if k == 0])
    ref = ms.sample_quadratures(src.state, 0.0, 300, rng.stream(5, rng.SYNTH, 0, 0))
    assert np.allclose(q, ref, atol=1e-10)


def test_frame_source_is_deterministic_and_seeded(small_grid, small_mode):
    def first(seed):
        src = FrameSource(fock.vacuum(4).to_density(), small_mode, 1.0, PhaseSet.uniform(1), 50, seed=seed)
        return next(src.chunks())[1]

    assert np.array_equal(first(3), first(3))
    assert not np.array_equal(first(3), first(4))


def test_orthogonal_noise_is_shot_noise(small_grid, small_mode):
    src = FrameSource(fock.vacuum(4).to_density(), small_mode, 1.0, PhaseSet.uniform(1), 4000, seed=2)
    data = np.concatenate([b for _, b in src.chunks()])
    other = wf.builtin_waveforms("square", small_grid, t_m2=50e-9, width=30e-9)
    # a mode disjoint from f1 sees vacuum variance 1/2
    assert abs(np.var(ms.extract_quadrature(data, other)) - 0.5) < 0.05


def test_synthesize_frames_grid_check(small_mode):
    with pytest.raises(GridMismatch):
        ms.synthesize_frames(fock.vacuum(3), small_mode, 1.0, PhaseSet.uniform(1), 2, 0,
                             grid=TimeGrid.span(0, 100e-9))


def test_frameset_roundtrip(tmp_path, small_mode):
    frames = ms.synthesize_frames(fock.vacuum(3), small_mode, 1.0, PhaseSet.uniform(2), 3, 7)
    fs = ms.FrameSet.from_frames(frames, seed=7)
    path = fs.save(tmp_path / "frames.npz")
    back = ms.FrameSet.load(path)
    assert np.array_equal(back.samples, fs.samples)
    assert np.array_equal(back.phases, fs.phases)
    assert back.grid.matches(fs.grid) and back.seed == 7


def test_lowpass_matches_filtfilt(small_grid):
    dt = small_grid.dt
    x = rng.stream(0, 9).standard_normal((3, small_grid.n))
    ours = ms.lowpass_fir(x, dt, 100e6, numtaps=101)
    b = firwin(101, 100e6, fs=1 / dt, window="hamming")
    ref = filtfilt(b, [1.0], x, axis=-1, padtype="odd", padlen=100)
    assert np.allclose(ours, ref, atol=1e-10)


def test_lowpass_frequency_response():
    grid = TimeGrid.span(0.0, 2e-6)
    t = grid.times
    dc = ms.lowpass_fir(np.ones((1, grid.n)), grid.dt)
    assert np.allclose(dc, 1.0, atol=1e-10)
    mid = slice(1000, -1000)
    slow = np.sin(2 * np.pi * 10e6 * t)
    fast = np.sin(2 * np.pi * 400e6 * t)
    # two passes of the Hamming passband ripple stay below a percent
    assert np.max(np.abs(ms.lowpass_fir(slow[None], grid.dt)[0][mid] - slow[mid])) < 1e-2
    assert np.max(np.abs(ms.lowpass_fir(fast[None], grid.dt)[0][mid])) < 1e-3
    with pytest.raises(DomainError):
        ms.lowpass_fir(slow[None], grid.dt, cutoff_hz=2e9)


def test_pca_full_recovers_mode_and_scale():
    # PC-1 misalignment scales like dim / frames, so keep the frames short
    grid = TimeGrid.span(0.0, 32e-9)
    mode = wf.builtin_waveforms("square_pulse_modulated", grid, width=10e-9)
    state = fock.fock_state(1, 10).to_density()
    frames = ms.synthesize_frames(state, mode, 1.0, PhaseSet.uniform(4), 5000, seed=11)
    vac = ms.synthesize_frames(fock.vacuum(3), mode, 1.0, PhaseSet.uniform(1), 4000, seed=11,
                               stage=rng.VACUUM)
    res = ms.pca(ms.FrameSet.from_frames(frames), vacuum=vac)
    assert wf.mode_matching(res.pc1, mode) > 0.99
    assert abs(res.scale - 1) < 0.05
    # single photon: <x^2> = 3/2
    assert abs(res.variances[0] - 1.5) < 0.15


def test_pca_subspace(small_grid, small_mode):
    state = fock.fock_state(1, 10).to_density()
    frames = ms.synthesize_frames(state, small_mode, 0.8, PhaseSet.uniform(2), 2000, seed=4)
    res = ms.pca(frames, candidates=[small_mode], noise_dim=8)
    assert wf.mode_matching(res.pc1, small_mode) > 0.99
    assert np.sum(res.pc1.samples) > 0


def test_pca_insufficient_frames(small_grid, small_mode):
    frames = ms.synthesize_frames(fock.vacuum(3), small_mode, 1.0, PhaseSet.uniform(1), 5, 0)
    with pytest.raises(InsufficientFrames):
        ms.pca(frames, candidates=[small_mode], noise_dim=8)


def quad_data(state, n, seed, phases=PhaseSet()):
    return [(th, ms.sample_quadratures(state, th, n, rng.stream(seed, 9, k)))
            for k, th in enumerate(phases.phases)]


def test_mle_vacuum_reconstruction():
    res = ms.mle_tomography(quad_data(fock.vacuum(10), 5000, 0), cutoff=10)
    assert fock.fidelity(fock.vacuum(10), res.rho) >= 0.995
    assert np.all(np.diff(res.likelihood_trace) >= 0)
    assert abs(res.rho.trace - 1) < 1e-10
    assert np.min(np.linalg.eigvalsh(res.rho.elems)) > -1e-10


def test_mle_lossy_single_photon():
    rho = fock.loss_channel(fock.fock_state(1, 10).to_density(), 0.67)
    res = ms.mle_tomography(quad_data(rho, 3000, 1), cutoff=10)
    assert abs(res.photon_dist[1] - 0.67) < 0.03
    assert abs(res.wigner_min - (1 - 2 * 0.67) / math.pi) < 0.02
    assert np.all(np.diff(res.likelihood_trace) >= 0)


def test_mle_unbinned_matches_binned():
    data = quad_data(fock.coherent_state(0.8, 10).normalize(), 500, 2, PhaseSet.uniform(4))
    a = ms.mle_tomography(data, cutoff=8, binned=True)
    b = ms.mle_tomography(data, cutoff=8, binned=False)
    assert fock.fidelity(a.rho, b.rho) > 0.98
    assert np.all(np.diff(b.likelihood_trace) >= 0)


def test_log_likelihood_consistent_with_trace():
    data = quad_data(fock.vacuum(6), 500, 3, PhaseSet.uniform(3))
    res = ms.mle_tomography(data, cutoff=6)
    assert abs(ms.log_likelihood(res.rho, data) - res.likelihood_trace[-1]) < 1e-6 * abs(res.likelihood_trace[-1])


def test_mle_needs_data():
    with pytest.raises(InsufficientFrames):
        ms.mle_tomography([(0.0, np.array([]))])


def test_tomography_json(tmp_path):
    res = ms.mle_tomography(quad_data(fock.vacuum(4), 300, 4, PhaseSet.uniform(2)), cutoff=4)
    d = json.loads(res.to_json(tmp_path / "t.json").read_text())
    assert len(d["rho_real"]) == 5 and d["iterations"] == res.iterations


def test_wigner_report_single_photon():
    rep = ms.wigner_report(fock.fock_state(1, 5))
    assert rep.w.shape == (201, 201)
    assert abs(rep.w_min + 1 / math.pi) < 1e-12
    assert abs(rep.w_origin + 1 / math.pi) < 1e-12
    assert np.allclose(rep.photon_dist, [0, 1, 0, 0, 0, 0])
