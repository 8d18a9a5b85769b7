"""Two-mode Gaussian resource and photon-number heralding.

The resource is two orthogonally squeezed vacua, S0(r0) S1(r1)|0,0>, mixed on a
variable beam splitter. ``T`` here follows the resource convention: it is the
fraction exchanged between the two channels (T = 0 leaves the squeezers
untouched, T = 1 swaps them). With that convention the x-quadrature inverse
covariance is

    s11 = 2 (R e^{2 r0} + T e^{2 r1})
    s12 = 2 sqrt(RT) (e^{2 r1} - e^{2 r0})
    s22 = 2 (T e^{2 r0} + R e^{2 r1}),   R = 1 - T.

Heralding projects channel 1 (trigger) onto Fock states and leaves channel 0
(signal) in a squeezed superposition of Fock states whose squeezing r_out is
fixed by (r0, r1, T) alone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from heraldlab import fock
from heraldlab.errors import AssumptionViolated, CutoffTooSmall, DomainError, NotEntangled
from heraldlab.fock import FockVector, TwoModeState

RESOURCE_TAIL_TOL = 1e-4
STRUCTURE_RESIDUAL_TOL = 1e-4
ENTANGLEMENT_TOL = 1e-10
SMALL_ALPHA = 0.5


@dataclass(frozen=True)
class GaussianResourceParams:
    r0: float
    r1: float
    T: float

    def __post_init__(self):
        if not 0.0 <= self.T <= 1.0:
            raise DomainError(f"transmissivity T={self.T} outside [0, 1]")
        for r in (self.r0, self.r1):
            if abs(r) > fock.MAX_ABS_R:
                raise DomainError(f"squeezing |r|={abs(r):.3f} exceeds {fock.MAX_ABS_R}")

    @classmethod
    def from_db(cls, r0_db: float, r1_db: float, T: float) -> GaussianResourceParams:
        return cls(fock.db_to_r(r0_db), fock.db_to_r(r1_db), T)

    @property
    def R(self) -> float:
        return 1.0 - self.T

    @property
    def is_entangled(self) -> bool:
        return abs(inverse_covariance(self).s12) > ENTANGLEMENT_TOL


@dataclass(frozen=True)
class InverseCovariance:
    s11: float
    s12: float
    s22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])


@dataclass(frozen=True)
class ACoefficients:
    a1: float
    a2: float
    a3: float


@dataclass(frozen=True)
class HeraldDecomposition:
    """Heralded branch n: probability and squeezed-Fock coefficients c2[0..n]."""

    n: int
    prob: float
    c2: np.ndarray
    r_out: float
    residual: float = 0.0


def inverse_covariance(params: GaussianResourceParams) -> InverseCovariance:
    e0, e1 = np.exp(2 * params.r0), np.exp(2 * params.r1)
    T, R = params.T, params.R
    return InverseCovariance(
        s11=2.0 * (R * e0 + T * e1),
        s12=2.0 * np.sqrt(R * T) * (e1 - e0),
        s22=2.0 * (T * e0 + R * e1),
    )


def a_coefficients(params: GaussianResourceParams) -> ACoefficients:
    s = inverse_covariance(params)
    a1 = np.sqrt(0.5 + s.s22 / 4.0)
    a2 = -s.s12 / (4.0 * a1)
    a3 = np.sqrt(s.s11 / 2.0 - s.s12**2 / (4.0 + 2.0 * s.s22))
    return ACoefficients(float(a1), float(a2), float(a3))


def r_out(params: GaussianResourceParams) -> float:
    """Output squeezing of every heralded branch."""
    r0, r1, T, R = params.r0, params.r1, params.T, params.R
    num = 1.0 + T * np.exp(2 * r0) + R * np.exp(2 * r1)
    den = 1.0 + T * np.exp(-2 * r0) + R * np.exp(-2 * r1)
    return float(r0 + r1 - 0.5 * np.log(num / den))


def trigger_mean_photons(params: GaussianResourceParams) -> float:
    """Mean photon number of the trigger channel from the Gaussian covariance."""
    s = inverse_covariance(params).matrix
    var_x1 = np.linalg.inv(s)[1, 1]
    # pure state with real squeezing: p covariance is inv(x covariance) / 4
    var_p1 = s[1, 1] / 4.0
    return float((var_x1 + var_p1 - 1.0) / 2.0)


def build_resource(params: GaussianResourceParams, cutoff: int) -> TwoModeState:
    """B(T) S0(r0) S1(r1)|0,0>, normalized, with the truncation tail recorded."""
    return _build_resource(params.r0, params.r1, params.T, cutoff)


@lru_cache(maxsize=64)
def _build_resource(r0: float, r1: float, T: float, cutoff: int) -> TwoModeState:
    v0 = fock.squeezed_vacuum(r0, cutoff)
    v1 = fock.squeezed_vacuum(r1, cutoff)
    product = TwoModeState(np.outer(v0.amps, v1.amps), tail=1.0 - v0.norm**2 * v1.norm**2)
    # the resource T is the exchanged fraction, i.e. transmission 1 - T
    mixed = fock.beam_splitter(product, 1.0 - T)
    if mixed.tail > RESOURCE_TAIL_TOL:
        raise CutoffTooSmall(f"resource tail {mixed.tail:.3g} at cutoff {cutoff}")
    amps = mixed.amps / np.linalg.norm(mixed.amps)
    amps.setflags(write=False)
    return TwoModeState(amps, tail=mixed.tail)


def _require_entangled(params: GaussianResourceParams, n: int) -> None:
    if n > 0 and not params.is_entangled:
        raise NotEntangled(
            f"resource (r0={params.r0:.4g}, r1={params.r1:.4g}, T={params.T:.4g}) is a "
            "product state; heralding on n > 0 carries no information"
        )


def herald_fock(
    params: GaussianResourceParams,
    n: int,
    cutoff: int,
    resource: TwoModeState | None = None,
) -> tuple[HeraldDecomposition, FockVector]:
    """State heralded by n trigger photons and its squeezed-Fock decomposition."""
    _require_entangled(params, n)
    res = build_resource(params, cutoff) if resource is None else resource
    vec, prob = fock.project_mode1(res, n)
    if prob < 1e-14:
        raise NotEntangled(f"P({n}) = {prob:.3g}; nothing to herald")
    psi = FockVector(vec.amps / np.sqrt(prob))
    r = r_out(params)
    unsqueezed = fock.squeeze_op(-r, res.cutoff) @ psi.amps
    residual = float(np.linalg.norm(unsqueezed[n + 1 :]))
    if residual > STRUCTURE_RESIDUAL_TOL:
        raise CutoffTooSmall(
            f"branch n={n}: {residual:.3g} of the amplitude sits above index n after "
            f"undoing r_out at cutoff {res.cutoff}"
        )
    c2 = unsqueezed[: n + 1]
    c2 = c2 / np.linalg.norm(c2)
    return HeraldDecomposition(n=n, prob=prob, c2=c2, r_out=r, residual=residual), psi


def superposition_vector(resource: TwoModeState, cprime) -> np.ndarray:
    """Unnormalized sum_n C'_n <n|_1 Phi>."""
    cprime = np.asarray(cprime, dtype=complex)
    if cprime.size > resource.cutoff + 1:
        raise DomainError("more projector coefficients than the cutoff holds")
    return resource.amps[:, : cprime.size] @ cprime


def herald_superposition(params: GaussianResourceParams, plan, cutoff: int,
                         resource: TwoModeState | None = None) -> FockVector:
    """Normalized state heralded by the projector sum_n C'_n <n|.

    ``plan`` is either a HeraldingPlan (its ``cprime`` is used) or the
    coefficient array itself.
    """
    cprime = np.asarray(getattr(plan, "cprime", plan), dtype=complex)
    n_max = int(np.max(np.nonzero(np.abs(cprime) > 0)[0], initial=0))
    _require_entangled(params, n_max)
    res = build_resource(params, cutoff) if resource is None else resource
    return FockVector(superposition_vector(res, cprime)).normalize()


def _split_network(tensor: np.ndarray, n_channels: int) -> np.ndarray:
    """Split trigger channel 1 (axis 1) equally over axes 1..N.

    Every channel j receives amplitude +1/sqrt(N) of the original mode.
    """
    for j in range(1, n_channels):
        keep = 1.0 / (n_channels - j + 1)
        # axis order (..., channel j+1, channel j) so the split-off amplitude is positive
        moved = np.moveaxis(tensor, (j + 1, j), (-2, -1))
        mixed, _ = fock.mix_last_axes(moved, keep)
        tensor = np.moveaxis(mixed, (-2, -1), (j + 1, j))
    return tensor


def trigger_forward_oracle(
    params: GaussianResourceParams,
    alphas,
    cutoff: int,
    cnorm: float = 1.0,
    exact_displacement: bool = False,
    resource: TwoModeState | None = None,
) -> FockVector:
    """Brute-force heralding through an explicit N-channel detection network.

    The trigger mode is split over N channels by a beam-splitter cascade, each
    channel is displaced by cnorm * alpha_j and projected onto one photon. With
    ``exact_displacement=False`` each detection is the first-order form
    <0|(a_j + cnorm alpha_j); otherwise the full <1| D(cnorm alpha_j) is used.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    n_ch = alphas.size
    if np.any(np.abs(alphas) > SMALL_ALPHA):
        warnings.warn(
            f"displacement |alpha| = {np.max(np.abs(alphas)):.3f} > {SMALL_ALPHA}; "
            "single-photon detection model is not reliable",
            AssumptionViolated,
            stacklevel=2,
        )
    _require_entangled(params, n_ch)
    res = build_resource(params, cutoff) if resource is None else resource
    d = res.cutoff + 1
    if n_ch == 0:
        return FockVector(res.amps[:, 0]).normalize()
    tensor = np.zeros((d,) * (n_ch + 1), dtype=complex)
    tensor[(slice(None), slice(None)) + (0,) * (n_ch - 1)] = res.amps
    tensor = _split_network(tensor, n_ch)
    for beta in cnorm * alphas:
        if exact_displacement:
            bra = fock.displace_op(beta, res.cutoff, columns=2)[1, :]
        else:
            bra = np.zeros(d, dtype=complex)
            bra[0], bra[1] = beta, 1.0
        tensor = np.tensordot(tensor, bra, axes=([1], [0]))
    return FockVector(tensor).normalize()


def extract_r_out(psi: FockVector, n: int, bracket: tuple[float, float] = (-1.0, 1.0)) -> float:
    """Squeezing r that leaves S(-r)|psi> with no support above photon number n.

    A coarse scan picks the basin, a bounded search refines it.
    """

    def leak(r: float) -> float:
        try:
            op = fock.squeeze_op(-r, psi.cutoff)
        except CutoffTooSmall:
            return np.inf
        v = op @ psi.amps
        return float(np.sum(np.abs(v[n + 1 :]) ** 2))

    grid = np.linspace(bracket[0], bracket[1], 201)
    vals = np.array([leak(r) for r in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(leak, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x)
