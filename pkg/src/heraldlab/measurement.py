"""Synthetic homodyne chain: frames, mode extraction, MLE tomography, Wigner analysis.

Frame samples are discrete-mode amplitudes: projecting a frame on any unit
vector gives a quadrature with vacuum variance 1/2. A continuous waveform f
(with sum f^2 dt = 1) maps to the unit vector f * sqrt(dt).
"""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import firwin, oaconvolve

from heraldlab import fock, rng
from heraldlab.errors import DomainError, GridMismatch, InsufficientFrames, NonConvergence
from heraldlab.fock import DensityMatrix, FockVector
from heraldlab.waveform import TemporalWaveform, TimeGrid

FRAME_DURATION = 2e-6
TOMO_CUTOFF = 10
SAMPLE_GRID = (-8.0, 8.0, 4096)
HIST_BINS = 200
WIGNER_SPAN = 5.0
WIGNER_STEP = 0.05


@dataclass(frozen=True)
class PhaseSet:
    phases: np.ndarray = field(default_factory=lambda: np.deg2rad(np.arange(12) * 15.0))

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float)
        if ph.ndim != 1 or ph.size == 0:
            raise DomainError("need at least one LO phase")
        if np.any(np.diff(ph) <= 0) or ph[0] < 0 or ph[-1] >= np.pi:
            raise DomainError("LO phases must increase strictly within [0, pi)")
        object.__setattr__(self, "phases", ph)

    @classmethod
    def uniform(cls, count: int) -> PhaseSet:
        return cls(np.pi * np.arange(count) / count)

    def __len__(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class QuadratureFrame:
    grid: TimeGrid
    samples: np.ndarray
    lo_phase: float


# ----------------------------------------------------------------- marginals


def hermite_functions(n_max: int, x) -> np.ndarray:
    """psi_n(x) for n = 0..n_max, rows indexed by n (vacuum variance 1/2)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def _as_density(state) -> DensityMatrix:
    if isinstance(state, FockVector):
        return state.normalize().to_density()
    if isinstance(state, DensityMatrix):
        return state.normalize()
    raise DomainError("expected a FockVector or DensityMatrix")


def marginal_pdf(rho, theta: float, x) -> np.ndarray:
    """pr(x | theta) = sum_mn rho_mn e^{i(n-m) theta} psi_m(x) psi_n(x)."""
    rho = _as_density(rho)
    psi = hermite_functions(rho.cutoff, x)
    ph = np.exp(1j * theta * np.arange(rho.cutoff + 1))
    rot = ph.conj()[:, None] * rho.elems * ph[None, :]
    val = np.einsum("m...,mn,n...->...", psi, rot, psi).real
    return np.clip(val, 0.0, None)


def sample_quadratures(rho, theta: float, size: int, gen: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from pr(x | theta) on a fixed x grid."""
    lo, hi, npts = SAMPLE_GRID
    x = np.linspace(lo, hi, npts)
    pdf = marginal_pdf(rho, theta, x)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return np.interp(gen.random(size), cdf, x)


# ----------------------------------------------------------------- frames


def default_frame_grid(dt: float = 0.32e-9) -> TimeGrid:
    return TimeGrid.span(0.0, FRAME_DURATION, dt)


@dataclass(frozen=True)
class FrameSource:
    """Deterministic, chunked generator of homodyne frames.

    Each frame is u = q e + (I - e e^T) w with e = f1 sqrt(dt), w white with
    variance 1/2 per sample and q drawn from the lossy marginal at the frame's
    LO phase. ``electronics_noise`` adds white noise of that fraction of the
    vacuum variance.
    """

    state: DensityMatrix
    f1: TemporalWaveform
    eta: float
    phases: PhaseSet
    frames_per_phase: int
    seed: int
    electronics_noise: float = 0.0
    chunk: int = 500
    stage: int = rng.SYNTH

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError("eta must lie in [0, 1]")
        if self.frames_per_phase < 1:
            raise DomainError("need at least one frame per phase")
        if abs(self.f1.norm - 1.0) > 1e-9:
            raise DomainError("f1 must be normalized on the frame grid")
        object.__setattr__(self, "state", fock.loss_channel(_as_density(self.state), self.eta))

    @property
    def grid(self) -> TimeGrid:
        return self.f1.grid

    @property
    def n_frames(self) -> int:
        return len(self.phases) * self.frames_per_phase

    def chunks(self) -> Iterator[tuple[int, np.ndarray]]:
        """Yield (phase index, frames[chunk, n]) in a fixed order."""
        e = self.f1.samples * math.sqrt(self.grid.dt)
        for k, theta in enumerate(self.phases.phases):
            q_all = sample_quadratures(self.state, theta, self.frames_per_phase,
                                       rng.stream(self.seed, self.stage, k, 0))
            for c, start in enumerate(range(0, self.frames_per_phase, self.chunk)):
                q = q_all[start : start + self.chunk]
                gen = rng.stream(self.seed, self.stage, k, c + 1)
                w = gen.standard_normal((q.size, self.grid.n)) * math.sqrt(0.5)
                w -= np.outer(w @ e - q, e)
                if self.electronics_noise > 0:
                    w += gen.standard_normal(w.shape) * math.sqrt(0.5 * self.electronics_noise)
                yield k, w


def synthesize_frames(
    state,
    f1: TemporalWaveform,
    eta: float,
    phases: PhaseSet,
    frames_per_phase: int,
    seed: int,
    grid: TimeGrid | None = None,
    **kwargs,
) -> list[QuadratureFrame]:
    """Materialized frames; use FrameSource.chunks for long runs."""
    if grid is not None and not grid.matches(f1.grid):
        raise GridMismatch("f1 is not sampled on the frame grid")
    src = FrameSource(_as_density(state), f1, eta, phases, frames_per_phase, seed, **kwargs)
    out = []
    for k, block in src.chunks():
        theta = float(phases.phases[k])
        out.extend(QuadratureFrame(src.grid, row, theta) for row in block)
    return out


@dataclass(frozen=True)
class FrameSet:
    """Stacked frames for serialization and batch analysis."""

    grid: TimeGrid
    samples: np.ndarray
    phases: np.ndarray
    seed: int = -1

    @classmethod
    def from_frames(cls, frames: list[QuadratureFrame], seed: int = -1) -> FrameSet:
        if not frames:
            raise InsufficientFrames("no frames")
        return cls(frames[0].grid, np.stack([f.samples for f in frames]),
                   np.array([f.lo_phase for f in frames]), seed)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        np.savez_compressed(path, samples=self.samples, phases=self.phases,
                            dt=self.grid.dt, t0=self.grid.t0, n=self.grid.n, seed=self.seed)
        return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")

    @classmethod
    def load(cls, path: str | Path) -> FrameSet:
        with np.load(path) as z:
            grid = TimeGrid(float(z["t0"]), float(z["dt"]), int(z["n"]))
            return cls(grid, z["samples"], z["phases"], int(z["seed"]))


def extract_quadrature(frame: QuadratureFrame | np.ndarray, mode: TemporalWaveform) -> float | np.ndarray:
    """Quadrature of the mode: sum_k mode_k u_k sqrt(dt).

    Accepts one frame or a stack of raw sample rows.
    """
    samples = frame.samples if isinstance(frame, QuadratureFrame) else np.asarray(frame)
    if isinstance(frame, QuadratureFrame) and not frame.grid.matches(mode.grid):
        raise GridMismatch("mode and frame grids differ")
    if samples.shape[-1] != mode.grid.n:
        raise GridMismatch("mode and frame lengths differ")
    val = samples @ mode.samples * math.sqrt(mode.grid.dt)
    return float(val) if np.ndim(val) == 0 else val


# ----------------------------------------------------------------- filtering


def lowpass_fir(frames: np.ndarray, dt: float, cutoff_hz: float = 100e6, numtaps: int = 401) -> np.ndarray:
    """Zero-phase Hamming FIR low-pass (forward and backward pass).

    Equivalent to one convolution with b * b[::-1]; edges use an odd
    extension so constant frames pass unchanged.
    """
    fs = 1.0 / dt
    if not 0 < cutoff_hz < fs / 2:
        raise DomainError("cutoff must lie below the Nyquist frequency")
    b = firwin(numtaps, cutoff_hz, fs=fs, window="hamming")
    h = np.convolve(b, b[::-1])
    pad = h.size // 2
    x = np.asarray(frames, dtype=float)
    if x.shape[-1] <= pad:
        raise DomainError("frame shorter than the filter")
    left = 2 * x[..., :1] - x[..., pad:0:-1]
    right = 2 * x[..., -1:] - x[..., -2 : -pad - 2 : -1]
    ext = np.concatenate([left, x, right], axis=-1)
    kernel = h.reshape((1,) * (x.ndim - 1) + (-1,))
    return oaconvolve(ext, kernel, mode="valid", axes=-1)


# ----------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PCAResult:
    components: list[TemporalWaveform]
    variances: np.ndarray
    scale: float

    @property
    def pc1(self) -> TemporalWaveform:
        return self.components[0]


def subspace_basis(grid: TimeGrid, candidates: Iterable[TemporalWaveform] = (),
                   noise_dim: int = 48, seed: int = 0) -> np.ndarray:
    """Orthonormal columns spanning candidate modes plus random directions."""
    cols = [c.samples * math.sqrt(grid.dt) for c in candidates]
    for c in candidates:
        if not c.grid.matches(grid):
            raise GridMismatch("candidate mode on a different grid")
    if noise_dim > 0:
        gen = rng.stream(seed, rng.PCA_BUFFER)
        cols.extend(gen.standard_normal((noise_dim, grid.n)))
    if not cols:
        raise DomainError("empty PCA subspace")
    q, r = np.linalg.qr(np.array(cols).T)
    keep = np.abs(np.diag(r)) > 1e-10 * np.max(np.abs(np.diag(r)))
    return q[:, keep]


class ProjectionAccumulator:
    """Streaming projections y = B^T u of frames onto a fixed basis."""

    def __init__(self, basis: np.ndarray):
        self.basis = basis
        self.rows: list[np.ndarray] = []
        self.phase_idx: list[np.ndarray] = []

    def add(self, k: int, block: np.ndarray) -> None:
        self.rows.append(block @ self.basis)
        self.phase_idx.append(np.full(block.shape[0], k))

    @property
    def projections(self) -> np.ndarray:
        return np.concatenate(self.rows)

    @property
    def phase_index(self) -> np.ndarray:
        return np.concatenate(self.phase_idx)


def _sign_fix(vecs: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # orient each component toward positive area (then toward the first basis column)
    comp = basis @ vecs
    ref = np.sum(comp, axis=0)
    alt = basis[:, :1].T @ comp
    s = np.where(np.abs(ref) > 1e-8, np.sign(ref), np.sign(alt[0]))
    s[s == 0] = 1.0
    return vecs * s


def pca_projected(y: np.ndarray, basis: np.ndarray, grid: TimeGrid,
                  vacuum_y: np.ndarray | None = None, n_components: int = 10,
                  vacuum_mode: str = "subspace") -> tuple[PCAResult, np.ndarray]:
    """PCA from subspace projections; returns the result and eigenvectors in the subspace.

    The vacuum reference fixes the scale so that vacuum reads 0.5 along PC-1.
    ``vacuum_mode='pc1'`` uses the vacuum variance along PC-1 only;
    ``'subspace'`` averages it over every subspace direction, which is the
    same quantity for white shot noise with far smaller sampling error.
    """
    n_frames, dim = y.shape
    if n_frames < 2 * dim:
        raise InsufficientFrames(f"{n_frames} frames for a {dim}-dimensional covariance")
    cov = np.cov(y, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    evals, evecs = evals[order], _sign_fix(evecs[:, order], basis)
    scale = 1.0
    if vacuum_y is not None:
        if vacuum_mode == "pc1":
            ref = float(np.var(vacuum_y @ evecs[:, 0], ddof=1))
        elif vacuum_mode == "subspace":
            ref = float(np.mean(np.var(vacuum_y, axis=0, ddof=1)))
        else:
            raise DomainError(f"unknown vacuum_mode {vacuum_mode!r}")
        scale = 0.5 / ref
    comps = [TemporalWaveform(grid, basis @ evecs[:, i] / math.sqrt(grid.dt)) for i in range(evecs.shape[1])]
    return PCAResult(comps, evals * scale, scale), evecs


def pca(frames, grid: TimeGrid | None = None, candidates: Iterable[TemporalWaveform] | None = None,
        noise_dim: int = 48, seed: int = 0, vacuum=None, n_components: int = 10,
        full_max: int = 2048, vacuum_mode: str = "subspace") -> PCAResult:
    """Principal components of the pooled frame covariance.

    ``frames`` is a FrameSet, a list of QuadratureFrame or a raw array. With
    no candidates and short frames the full covariance is diagonalized;
    otherwise the covariance is taken inside the span of the candidate modes
    plus ``noise_dim`` random directions.
    """
    data, grid = _frame_array(frames, grid)
    vac = None if vacuum is None else _frame_array(vacuum, grid)[0]
    if candidates is None and grid.n <= full_max:
        basis = np.eye(grid.n)
    else:
        basis = subspace_basis(grid, candidates or (), noise_dim, seed)
    y = data @ basis
    vy = None if vac is None else vac @ basis
    return pca_projected(y, basis, grid, vy, n_components, vacuum_mode)[0]


def _frame_array(frames, grid: TimeGrid | None) -> tuple[np.ndarray, TimeGrid]:
    if isinstance(frames, FrameSet):
        return frames.samples, frames.grid
    if isinstance(frames, (list, tuple)) and frames and isinstance(frames[0], QuadratureFrame):
        return np.stack([f.samples for f in frames]), frames[0].grid
    if grid is None:
        raise DomainError("raw frame arrays need an explicit grid")
    arr = np.asarray(frames, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != grid.n:
        raise GridMismatch("frame array does not match the grid")
    return arr, grid


# ----------------------------------------------------------------- MLE


@dataclass
class TomographyResult:
    rho: DensityMatrix
    iterations: int
    likelihood_trace: np.ndarray
    wigner_min: float
    photon_dist: np.ndarray
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "rho_real": self.rho.elems.real.tolist(),
            "rho_imag": self.rho.elems.imag.tolist(),
            "wigner_min": self.wigner_min,
            "photon_dist": self.photon_dist.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "log_likelihood": float(self.likelihood_trace[-1]),
        }

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path


def _binned_kernels(x: np.ndarray, cutoff: int, bins: int, order: int = 8):
    """Histogram counts and bin-averaged psi_m psi_n kernels for one phase."""
    lo, hi = float(np.min(x)), float(np.max(x))
    pad = 1e-9 + 1e-6 * (hi - lo)
    edges = np.linspace(lo - pad, hi + pad, bins + 1)
    counts, _ = np.histogram(x, edges)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    psi = hermite_functions(cutoff, pts)  # (d, bins, order)
    kern = np.einsum("mbk,nbk,k,b->bmn", psi, psi, weights, half)
    keep = counts > 0
    return counts[keep].astype(float), kern[keep]


def _sample_kernels(x: np.ndarray, cutoff: int):
    psi = hermite_functions(cutoff, x)  # (d, samples)
    return np.ones(x.size), np.einsum("ms,ns->smn", psi, psi)


def _hermitian_unit_trace(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real


def mle_tomography(
    quads: Iterable[tuple[float, np.ndarray]],
    cutoff: int = TOMO_CUTOFF,
    max_iter: int = 5000,
    tol: float = 1e-8,
    binned: bool = True,
    bins: int = HIST_BINS,
) -> TomographyResult:
    """Iterative R rho R reconstruction from (phase, samples) pairs.

    A step that would lower the likelihood is replaced by the diluted update
    (I + eps R) rho (I + eps R), halving eps until the likelihood rises, so
    the trace is non-decreasing.
    """
    d = cutoff + 1
    blocks = []
    total = 0.0
    for theta, x in quads:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            continue
        counts, kern = _binned_kernels(x, cutoff, bins) if binned else _sample_kernels(x, cutoff)
        ph = np.exp(1j * theta * np.arange(d))
        blocks.append((counts, kern, ph))
        total += counts.sum()
    if not blocks:
        raise InsufficientFrames("no quadrature samples")

    def probs_and_r(rho):
        loglik = 0.0
        r_op = np.zeros((d, d), dtype=complex)
        for counts, kern, ph in blocks:
            rot = ph.conj()[:, None] * rho * ph[None, :]
            pr = np.einsum("bmn,nm->b", kern, rot).real
            pr = np.clip(pr, 1e-300, None)
            loglik += float(counts @ np.log(pr))
            local = np.einsum("b,bmn->mn", counts / pr, kern)
            r_op += ph[:, None] * local * ph.conj()[None, :]
        return loglik, r_op / total

    rho = np.eye(d, dtype=complex) / d
    ll, r_op = probs_and_r(rho)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eps = None
        new = _hermitian_unit_trace(r_op @ rho @ r_op)
        new_ll, new_r = probs_and_r(new)
        while new_ll < ll:
            eps = 1.0 if eps is None else eps / 2
            if eps < 1e-8:
                new, new_ll, new_r = rho, ll, r_op
                break
            step = np.eye(d) + eps * r_op
            new = _hermitian_unit_trace(step @ rho @ step)
            new_ll, new_r = probs_and_r(new)
        delta = float(np.max(np.abs(new - rho)))
        rho, ll, r_op = new, new_ll, new_r
        trace.append(ll)
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MLE stopped after {max_iter} iterations", NonConvergence, stacklevel=2)
    dm = DensityMatrix(rho)
    report = wigner_report(dm)
    return TomographyResult(dm, it, np.array(trace), report.w_min, dm.photon_distribution(), converged)


def log_likelihood(rho: DensityMatrix, quads, bins: int = HIST_BINS) -> float:
    """Binned log-likelihood of ``rho`` (same binning as mle_tomography)."""
    d = rho.cutoff + 1
    out = 0.0
    for theta, x in quads:
        counts, kern = _binned_kernels(np.asarray(x, float), rho.cutoff, bins)
        ph = np.exp(1j * theta * np.arange(d))
        rot = ph.conj()[:, None] * rho.elems * ph[None, :]
        pr = np.einsum("bmn,nm->b", kern, rot).real
        out += float(counts @ np.log(np.clip(pr, 1e-300, None)))
    return out


# ----------------------------------------------------------------- Wigner


@dataclass(frozen=True)
class WignerReport:
    x: np.ndarray
    p: np.ndarray
    w: np.ndarray
    w_min: float
    w_origin: float
    photon_dist: np.ndarray


def wigner_report(rho, span: float = WIGNER_SPAN, step: float = WIGNER_STEP) -> WignerReport:
    """Wigner function on [-span, span]^2 with its minimum and origin value."""
    rho = _as_density(rho)
    npts = int(round(2 * span / step)) + 1
    axis = np.linspace(-span, span, npts)
    xx, pp = np.meshgrid(axis, axis, indexing="ij")
    w = fock.wigner(rho, xx, pp)
    return WignerReport(axis, axis.copy(), w, float(np.min(w)), fock.wigner_origin(rho),
                        rho.photon_distribution())
