"""Truncated Fock-space numerics for one and two bosonic modes.

Conventions: hbar = 1, x = (a + a^dag)/sqrt(2), p = (a - a^dag)/(i sqrt(2)).
The squeezing operator is S(r) = exp[r (a^2 - a^dag^2) / 2], so r > 0 squeezes
x and a vacuum input has Var(x) = exp(-2r)/2.

Gaussian operators are built by a dense matrix exponential on a padded space
of dimension 2*cutoff + 9 and cropped back to cutoff + 1; the norm lost by the
columns a caller actually uses is the truncation leakage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import comb, eval_genlaguerre, gammaln

from heraldlab.errors import CutoffTooSmall, DomainError

LEAKAGE_TOL = 1e-6
MAX_ABS_R = 2.0  # about 17 dB
MIN_GAUSSIAN_CUTOFF = 4


@dataclass(frozen=True)
class FockVector:
    """Complex amplitudes over photon numbers 0..cutoff of one mode."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if amps.ndim != 1 or amps.size == 0:
            raise DomainError("FockVector needs a non-empty 1-D amplitude array")
        object.__setattr__(self, "amps", amps)

    @property
    def cutoff(self) -> int:
        return self.amps.size - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> FockVector:
        n = self.norm
        if n == 0:
            raise DomainError("cannot normalize the zero vector")
        return FockVector(self.amps / n)

    def to_density(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amps, self.amps.conj()))

    def resize(self, cutoff: int) -> FockVector:
        out = np.zeros(cutoff + 1, dtype=complex)
        k = min(cutoff, self.cutoff) + 1
        out[:k] = self.amps[:k]
        return FockVector(out)


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator on the truncated Fock space."""

    elems: np.ndarray

    def __post_init__(self):
        elems = np.asarray(self.elems, dtype=complex)
        if elems.ndim != 2 or elems.shape[0] != elems.shape[1]:
            raise DomainError("DensityMatrix needs a square matrix")
        object.__setattr__(self, "elems", elems)

    @property
    def cutoff(self) -> int:
        return self.elems.shape[0] - 1

    @property
    def trace(self) -> float:
        return float(np.trace(self.elems).real)

    def normalize(self) -> DensityMatrix:
        return DensityMatrix(self.elems / self.trace)

    def photon_distribution(self) -> np.ndarray:
        return np.clip(np.diag(self.elems).real, 0.0, None)

    def resize(self, cutoff: int) -> DensityMatrix:
        out = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        k = min(cutoff, self.cutoff) + 1
        out[:k, :k] = self.elems[:k, :k]
        return DensityMatrix(out)


@dataclass(frozen=True)
class TwoModeState:
    """Joint amplitudes indexed ``amps[n0, n1]``; ``tail`` is norm lost to truncation."""

    amps: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1]:
            raise DomainError("TwoModeState needs a square (cutoff+1)x(cutoff+1) array")
        object.__setattr__(self, "amps", amps)

    @property
    def cutoff(self) -> int:
        return self.amps.shape[0] - 1

    @classmethod
    def product(cls, a: FockVector, b: FockVector) -> TwoModeState:
        if a.cutoff != b.cutoff:
            raise DomainError("product state needs equal cutoffs")
        return cls(np.outer(a.amps, b.amps))

    def marginal_photon_distribution(self, mode: int) -> np.ndarray:
        probs = np.abs(self.amps) ** 2
        return probs.sum(axis=1 - mode)


def db_to_r(level_db: float) -> float:
    """Squeezing parameter for a level in dB: exp(-2r) = 10**(-dB/10)."""
    return float(level_db) * np.log(10.0) / 20.0


def r_to_db(r: float) -> float:
    return float(r) * 20.0 / np.log(10.0)


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)


def vacuum(cutoff: int) -> FockVector:
    if cutoff < 0:
        raise DomainError("cutoff must be non-negative")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[0] = 1.0
    return FockVector(amps)


def fock_state(n: int, cutoff: int) -> FockVector:
    if not 0 <= n <= cutoff:
        raise DomainError(f"photon number {n} outside 0..{cutoff}")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[n] = 1.0
    return FockVector(amps)


def coherent_state(alpha: complex, cutoff: int) -> FockVector:
    """Closed-form coherent amplitudes, truncated (not renormalized)."""
    n = np.arange(cutoff + 1)
    log_mag = n * np.log(abs(alpha)) if alpha != 0 else np.where(n == 0, 0.0, -np.inf)
    amps = np.exp(-abs(alpha) ** 2 / 2 + log_mag - 0.5 * gammaln(n + 1))
    return FockVector(amps * np.exp(1j * np.angle(alpha) * n))


def _padded_dim(cutoff: int) -> int:
    return 2 * cutoff + 8


def _check_gaussian_cutoff(cutoff: int) -> None:
    if cutoff < MIN_GAUSSIAN_CUTOFF:
        raise DomainError(f"Gaussian operators need cutoff >= {MIN_GAUSSIAN_CUTOFF}, got {cutoff}")


def truncation_leakage(op: np.ndarray, columns: int | None = None) -> float:
    """Largest norm deficit among the first ``columns`` columns of a cropped unitary."""
    cols = op.shape[1] if columns is None else columns
    norms = np.sum(np.abs(op[:, :cols]) ** 2, axis=0)
    return float(max(0.0, np.max(1.0 - norms)))


def _crop_checked(full: np.ndarray, cutoff: int, columns: int, what: str) -> np.ndarray:
    op = full[: cutoff + 1, : cutoff + 1]
    leak = truncation_leakage(op, columns)
    if leak > LEAKAGE_TOL:
        raise CutoffTooSmall(
            f"{what}: leakage {leak:.3g} above {LEAKAGE_TOL:g} in the first {columns} "
            f"columns at cutoff {cutoff}"
        )
    return op


def squeeze_op(r: float, cutoff: int, columns: int = 1) -> np.ndarray:
    """Matrix of S(r) on 0..cutoff.

    ``columns`` is how many leading input photon numbers the caller relies on;
    CutoffTooSmall is raised when any of them leaks more than 1e-6.
    """
    _check_gaussian_cutoff(cutoff)
    if abs(r) > MAX_ABS_R:
        raise DomainError(f"|r| = {abs(r):.3f} exceeds {MAX_ABS_R}")
    a = annihilation(_padded_dim(cutoff))
    gen = 0.5 * r * (a @ a - a.T @ a.T)
    return _crop_checked(expm(gen), cutoff, columns, "squeeze_op")


def displace_op(alpha: complex, cutoff: int, columns: int = 1) -> np.ndarray:
    """Matrix of D(alpha) = exp(alpha a^dag - alpha* a) on 0..cutoff."""
    _check_gaussian_cutoff(cutoff)
    a = annihilation(_padded_dim(cutoff)).astype(complex)
    gen = alpha * a.T - np.conj(alpha) * a
    return _crop_checked(expm(gen), cutoff, columns, "displace_op")


def squeezed_vacuum(r: float, cutoff: int) -> FockVector:
    return FockVector(squeeze_op(r, cutoff)[:, 0])


@lru_cache(maxsize=512)
def _sector_unitary(total: int, theta: float) -> np.ndarray:
    # basis |k, total-k>, k = 0..total; generator theta (a0^dag a1 - a0 a1^dag)
    k = np.arange(total)
    up = np.sqrt((k + 1.0) * (total - k))
    gen = np.zeros((total + 1, total + 1))
    gen[k + 1, k] = theta * up
    gen[k, k + 1] = -theta * up
    return expm(gen)


def mix_last_axes(amps: np.ndarray, T: float) -> tuple[np.ndarray, float]:
    """Beam-splitter rotation acting on the last two axes of an amplitude tensor.

    Leading axes are spectators. Returns the rotated tensor and the squared norm
    that left the per-mode cutoff.
    """
    c = amps.shape[-1] - 1
    theta = float(np.arccos(np.sqrt(T)))
    out = np.zeros_like(amps, dtype=complex)
    lost = 0.0
    for total in range(2 * c + 1):
        k = np.arange(total + 1)
        inside = (k <= c) & (total - k <= c)
        ki, kj = k[inside], total - k[inside]
        block = amps[..., ki, kj]
        if not np.any(block):
            continue
        full = np.zeros(block.shape[:-1] + (total + 1,), dtype=complex)
        full[..., inside] = block
        rotated = full @ _sector_unitary(total, theta).T
        out[..., ki, kj] = rotated[..., inside]
        lost += float(np.sum(np.abs(rotated[..., ~inside]) ** 2))
    return out, lost


def beam_splitter(two_mode: TwoModeState, T: float) -> TwoModeState:
    """Mix the two modes on a beam splitter of intensity transmission ``T``.

    Heisenberg action: a0 -> sqrt(T) a0 + sqrt(1-T) a1, a1 -> sqrt(T) a1 - sqrt(1-T) a0,
    so T = 1 is the identity. Each total-photon sector is rotated exactly; the
    part of a sector that lands outside the per-mode cutoff is added to ``tail``.
    """
    if not 0.0 <= T <= 1.0:
        raise DomainError(f"transmission T={T} outside [0, 1]")
    out, lost = mix_last_axes(two_mode.amps, T)
    return TwoModeState(out, tail=two_mode.tail + lost)


def project_mode1(state: TwoModeState, n: int) -> tuple[FockVector, float]:
    """Apply <n|_1; returns the unnormalized mode-0 vector and its squared norm."""
    if not 0 <= n <= state.cutoff:
        raise DomainError(f"photon number {n} outside 0..{state.cutoff}")
    vec = state.amps[:, n].copy()
    return FockVector(vec), float(np.vdot(vec, vec).real)


def loss_channel(rho: DensityMatrix, eta: float) -> DensityMatrix:
    """Pure-loss channel of transmission ``eta`` (beam splitter to vacuum)."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"transmission eta={eta} outside [0, 1]")
    d = rho.cutoff + 1
    n = np.arange(d)
    out = np.zeros_like(rho.elems)
    for k in range(d):
        src = n[k:]
        dst = src - k
        kraus = np.zeros((d, d))
        kraus[dst, src] = np.sqrt(comb(src, k)) * eta ** (dst / 2) * (1.0 - eta) ** (k / 2)
        out += kraus @ rho.elems @ kraus.T
    return DensityMatrix(out)


def _wigner_terms(cutoff: int, x: np.ndarray, p: np.ndarray):
    s = x * x + p * p
    z = np.sqrt(2.0) * (x - 1j * p)
    log_fact = gammaln(np.arange(cutoff + 1) + 1)
    gauss = np.exp(-s) / np.pi
    for m in range(cutoff + 1):
        for n in range(m + 1):
            coef = (-1) ** n * np.exp(0.5 * (log_fact[n] - log_fact[m]))
            yield m, n, coef * z ** (m - n) * eval_genlaguerre(n, m - n, 2 * s) * gauss


def wigner(rho: DensityMatrix | FockVector, x, p):
    """Wigner function W(x, p) (hbar = 1) via the Laguerre closed form.

    Accepts scalars or broadcastable arrays; returns a float or array.
    """
    if isinstance(rho, FockVector):
        rho = rho.to_density()
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    elems = rho.elems
    w = np.zeros(x.shape)
    for m, n, term in _wigner_terms(rho.cutoff, x, p):
        if m == n:
            w += (elems[m, m] * term).real
        elif elems[m, n] != 0:
            w += 2.0 * (elems[m, n] * term).real
    return float(w) if w.ndim == 0 else w


def wigner_origin(rho: DensityMatrix | FockVector) -> float:
    """Parity form W(0,0) = (1/pi) sum_n (-1)^n rho_nn."""
    if isinstance(rho, FockVector):
        diag = np.abs(rho.amps) ** 2 / rho.norm**2
    else:
        diag = np.diag(rho.elems).real
    return float(np.sum((-1.0) ** np.arange(diag.size) * diag) / np.pi)


def fidelity(a: FockVector | DensityMatrix, b: FockVector | DensityMatrix) -> float:
    """Overlap |<a|b>|^2 for pure inputs, Uhlmann fidelity otherwise."""
    if a.cutoff != b.cutoff:
        raise DomainError("fidelity needs equal cutoffs")
    if isinstance(a, FockVector) and isinstance(b, FockVector):
        val = abs(np.vdot(a.amps, b.amps)) ** 2 / (a.norm**2 * b.norm**2)
    elif isinstance(a, FockVector) or isinstance(b, FockVector):
        psi, rho = (a, b) if isinstance(a, FockVector) else (b, a)
        val = np.vdot(psi.amps, rho.elems @ psi.amps).real / (psi.norm**2 * rho.trace)
    else:
        evals, evecs = np.linalg.eigh(a.elems)
        sqrt_a = (evecs * np.sqrt(np.clip(evals, 0, None))) @ evecs.conj().T
        inner = np.linalg.eigvalsh(sqrt_a @ b.elems @ sqrt_a)
        val = np.sum(np.sqrt(np.clip(inner, 0, None))) ** 2 / (a.trace * b.trace)
    return float(min(1.0, max(0.0, val)))


def quadrature_variance(state: FockVector | DensityMatrix, theta: float = 0.0) -> float:
    """Var(x_theta) with x_theta = x cos(theta) + p sin(theta)."""
    if isinstance(state, FockVector):
        state = state.normalize().to_density()
    a = annihilation(state.cutoff)
    xq = (a * np.exp(-1j * theta) + a.T * np.exp(1j * theta)) / np.sqrt(2.0)
    rho = state.elems / state.trace
    mean = np.trace(rho @ xq).real
    second = np.trace(rho @ xq @ xq).real
    return float(second - mean**2)


def mean_photon_number(state: FockVector | DensityMatrix) -> float:
    if isinstance(state, FockVector):
        probs = np.abs(state.amps) ** 2 / state.norm**2
    else:
        probs = np.diag(state.elems).real / state.trace
    return float(np.sum(np.arange(probs.size) * probs))
