"""Inverse planning: from a target S(r_out) sum_n c_n |n> to experimental settings.

Steps: pick (r0, r1, T) that give the target r_out, herald every branch
n = 0..N to tabulate the squeezed-Fock coefficients C''^(n), back-substitute
the projector coefficients C'_n, then factor the projector polynomial

    sum_n C'_n z^n / sqrt(n!)  ∝  prod_j ( z / (sqrt(N) c') + alpha_j )

to obtain the displacement amplitudes alpha_j.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from heraldlab import fock, herald
from heraldlab.errors import (
    AssumptionViolated,
    DomainError,
    IllConditioned,
    NoSolution,
    SingularTable,
)
from heraldlab.fock import FockVector
from heraldlab.herald import GaussianResourceParams, HeraldDecomposition

MAX_ABS_R_OUT = 1.5
DEFAULT_R0 = fock.db_to_r(3.0)
COND_WARN = 1e8
REEXPANSION_TOL = 1e-9
MAX_TRIGGER_PHOTONS = 0.2
STRATEGIES = ("symmetric", "max_prob", "fixed")


@dataclass(frozen=True)
class TargetState:
    """S(r_out) sum_n c_n |n> with c_N the last nonzero coefficient."""

    r_out_target: float
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise DomainError("target coefficients must be a non-empty vector")
        if abs(np.linalg.norm(c) - 1.0) > 1e-10:
            raise DomainError("target coefficients must be normalized; use TargetState.create")
        if abs(c[-1]) <= 1e-12:
            raise DomainError("last target coefficient c_N must be nonzero")
        if abs(self.r_out_target) > MAX_ABS_R_OUT:
            raise DomainError(f"|r_out| = {abs(self.r_out_target):.3f} exceeds {MAX_ABS_R_OUT}")
        object.__setattr__(self, "c", c)

    @classmethod
    def create(cls, r_out: float, c) -> TargetState:
        """Normalize ``c`` and drop trailing zeros before validating."""
        c = np.asarray(c, dtype=complex)
        nz = np.nonzero(np.abs(c) > 1e-12)[0]
        if nz.size == 0:
            raise DomainError("target coefficients are all zero")
        c = c[: nz[-1] + 1]
        return cls(float(r_out), c / np.linalg.norm(c))

    @property
    def N(self) -> int:
        return self.c.size - 1

    def vector(self, cutoff: int) -> FockVector:
        if cutoff < self.N:
            raise DomainError("cutoff below the target stellar rank")
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[: self.c.size] = self.c
        if self.r_out_target == 0.0:
            return FockVector(amps)
        s = fock.squeeze_op(self.r_out_target, cutoff, columns=self.c.size)
        return FockVector(s @ amps).normalize()


@dataclass(frozen=True)
class HeraldingPlan:
    target: TargetState
    params: GaussianResourceParams
    n_detect: int
    cprime: np.ndarray
    alphas: np.ndarray
    cnorm: float
    predicted_prob: float
    strategy: str = "symmetric"

    def to_dict(self) -> dict:
        return {
            "n_detect": self.n_detect,
            "strategy": self.strategy,
            "r0": self.params.r0,
            "r1": self.params.r1,
            "r0_db": fock.r_to_db(self.params.r0),
            "r1_db": fock.r_to_db(self.params.r1),
            "T": self.params.T,
            "r_out": herald.r_out(self.params),
            "cnorm": self.cnorm,
            "cprime_real": [float(v.real) for v in self.cprime],
            "cprime_imag": [float(v.imag) for v in self.cprime],
            "alphas_real": [float(v.real) for v in self.alphas],
            "alphas_imag": [float(v.imag) for v in self.alphas],
            "predicted_prob": self.predicted_prob,
            "target_real": [float(v.real) for v in self.target.c],
            "target_imag": [float(v.imag) for v in self.target.c],
        }


@dataclass
class PlanReport:
    fidelity: float
    prob: float
    max_alpha: float
    mean_trigger_photons: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "prob": self.prob,
            "max_alpha": self.max_alpha,
            "mean_trigger_photons": self.mean_trigger_photons,
            "warnings": list(self.warnings),
        }


# ----------------------------------------------------------------- step 2


def _solve_r1(target: float, r0: float, T: float) -> float | None:
    def f(r1):
        return herald.r_out(GaussianResourceParams(r0, r1, T)) - target

    lo, hi = -fock.MAX_ABS_R, fock.MAX_ABS_R
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        return None
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)


def _symmetric(target: float, r0: float) -> GaussianResourceParams:
    if target < 0:
        p = _symmetric(-target, r0)
        return GaussianResourceParams(-p.r0, -p.r1, p.T)
    # stronger r0 extends the reachable range; first workable value wins
    for r0_try in np.concatenate([[abs(r0)], np.linspace(abs(r0), fock.MAX_ABS_R, 41)[1:]]):
        r1 = _solve_r1(target, r0_try, 0.5)
        if r1 is not None:
            return GaussianResourceParams(float(r0_try), float(r1), 0.5)
    raise NoSolution(f"no symmetric resource reaches r_out = {target}")


def _max_prob(target: float, n_detect: int, p_min: float, cutoff: int) -> GaussianResourceParams:
    best, best_p = None, -1.0
    for T in np.linspace(0.05, 0.95, 19):
        for r0 in np.linspace(-1.2, 1.2, 25):
            r1 = _solve_r1(target, r0, T)
            if r1 is None:
                continue
            p = GaussianResourceParams(float(r0), float(r1), float(T))
            if not p.is_entangled or herald.trigger_mean_photons(p) > MAX_TRIGGER_PHOTONS:
                continue
            try:
                res = herald.build_resource(p, cutoff)
            except Exception:  # noqa: BLE001 - cutoff too small for this corner of the grid
                continue
            prob = fock.project_mode1(res, n_detect)[1]
            if prob > best_p:
                best, best_p = p, prob
    if best is None or best_p < p_min:
        raise NoSolution(
            f"no resource with <n_trigger> <= {MAX_TRIGGER_PHOTONS} reaches r_out = {target} "
            f"with P({n_detect}) >= {p_min}"
        )
    return best


def solve_gaussian_params(
    r_out_target: float,
    strategy: str = "symmetric",
    *,
    n_detect: int = 1,
    p_min: float = 0.0,
    r0: float = DEFAULT_R0,
    cutoff: int = 20,
) -> GaussianResourceParams:
    """Resource parameters realizing ``r_out_target``.

    ``symmetric`` keeps T = 0.5 and r1 = -r0 + delta; ``max_prob`` scans
    (T, r0), solves r1, and keeps the triple with the largest P(n_detect)
    among those with at most 0.2 mean trigger photons.
    """
    if abs(r_out_target) > MAX_ABS_R_OUT:
        raise DomainError(f"|r_out| = {abs(r_out_target):.3f} exceeds {MAX_ABS_R_OUT}")
    if strategy == "symmetric":
        return _symmetric(r_out_target, r0)
    if strategy == "max_prob":
        return _max_prob(r_out_target, n_detect, p_min, cutoff)
    raise DomainError(f"unknown strategy {strategy!r}; choose from symmetric, max_prob")


# ----------------------------------------------------------------- step 3-4


def decomposition_table(params: GaussianResourceParams, n_max: int, cutoff: int) -> list[HeraldDecomposition]:
    res = herald.build_resource(params, cutoff)
    return [herald.herald_fock(params, n, cutoff, resource=res)[0] for n in range(n_max + 1)]


def _relation_matrix(table: list[HeraldDecomposition]) -> np.ndarray:
    size = len(table)
    m = np.zeros((size, size), dtype=complex)
    for d in table:
        m[: d.n + 1, d.n] = d.c2 * np.sqrt(d.prob)
    return m


def solve_cprime(target: TargetState, table: list[HeraldDecomposition]) -> np.ndarray:
    """Back-substitute C'_N, C'_{N-1}, ..., C'_0 from c_j = sum_{n>=j} M[j,n] C'_n."""
    n_max = target.N
    if len(table) < n_max + 1:
        raise DomainError(f"decomposition table needs entries 0..{n_max}")
    m = _relation_matrix(table[: n_max + 1])
    diag = np.abs(np.diag(m))
    if np.any(diag < 1e-12):
        bad = int(np.argmin(diag))
        raise SingularTable(f"|C''_{bad} sqrt(P({bad}))| = {diag[bad]:.3g} below 1e-12")
    cprime = np.zeros(n_max + 1, dtype=complex)
    for j in range(n_max, -1, -1):
        cprime[j] = (target.c[j] - m[j, j + 1 :] @ cprime[j + 1 :]) / m[j, j]
    return cprime


# ----------------------------------------------------------------- step 5


def cprime_from_alphas(alphas, cnorm: float = 1.0) -> np.ndarray:
    """Coefficients C'_n of prod_j (z/(sqrt(N) c') + alpha_j) = sum_n C'_n z^n / sqrt(n!)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    n = alphas.size
    poly = np.array([1.0 + 0j])  # ascending powers of z
    for a in alphas:
        poly = np.convolve(poly, np.array([a, 1.0 / (math.sqrt(n) * cnorm)]))
    return poly * np.sqrt([math.factorial(k) for k in range(n + 1)])


def _companion_roots(coeffs: np.ndarray) -> tuple[np.ndarray, float]:
    """Roots of sum_k coeffs[k] z^k (coeffs[-1] != 0) and their eigenvector conditioning."""
    deg = coeffs.size - 1
    if deg == 0:
        return np.zeros(0, dtype=complex), 1.0
    comp = np.zeros((deg, deg), dtype=complex)
    comp[1:, :-1] = np.eye(deg - 1)
    comp[:, -1] = -coeffs[:-1] / coeffs[-1]
    roots, vecs = np.linalg.eig(comp)
    return roots, float(np.linalg.cond(vecs))


def alphas_from_cprime(cprime, cnorm: float = 1.0) -> np.ndarray:
    cprime = np.asarray(cprime, dtype=complex)
    n = cprime.size - 1
    if abs(cprime[-1]) == 0.0:
        raise DomainError("leading projector coefficient C'_N must be nonzero")
    if n == 0:
        return np.zeros(0, dtype=complex)
    coeffs = cprime / np.sqrt([math.factorial(k) for k in range(n + 1)])
    coeffs = coeffs / coeffs[-1]
    # exact zeros at the low end are roots at the origin; keep them out of the eigensolve
    scale = np.max(np.abs(coeffs))
    n_zero = 0
    while n_zero < n and abs(coeffs[n_zero]) <= 1e-15 * scale:
        n_zero += 1
    roots, cond = _companion_roots(coeffs[n_zero:])
    roots = np.concatenate([np.zeros(n_zero, dtype=complex), roots])
    if cond > COND_WARN:
        warnings.warn(f"root conditioning {cond:.3g} exceeds {COND_WARN:g}", IllConditioned, stacklevel=2)
    alphas = -roots / (math.sqrt(n) * cnorm)
    err = reexpansion_error(cprime, alphas, cnorm)
    if err > REEXPANSION_TOL:
        warnings.warn(f"root re-expansion error {err:.3g}", IllConditioned, stacklevel=2)
    return alphas


def reexpansion_error(cprime, alphas, cnorm: float = 1.0) -> float:
    """Max coefficient error of the re-expanded product after matching the global factor."""
    cprime = np.asarray(cprime, dtype=complex)
    expanded = cprime_from_alphas(alphas, cnorm)
    expanded = expanded * (cprime[-1] / expanded[-1])
    return float(np.max(np.abs(expanded - cprime)) / np.max(np.abs(cprime)))


# ----------------------------------------------------------------- composition


def predicted_probability(params: GaussianResourceParams, alphas, cnorm: float, cutoff: int) -> float:
    """Squared norm of <0| prod_j (a/(sqrt(N) c') + alpha_j) |Phi>.

    Model-relative: it carries the overall constant of the projector. For
    N = 1 and alpha = 0 it equals P(1)/c'^2.
    """
    res = herald.build_resource(params, cutoff)
    vec = herald.superposition_vector(res, cprime_from_alphas(alphas, cnorm))
    return float(np.vdot(vec, vec).real)


def plan(
    target: TargetState,
    cnorm: float = 1.0,
    strategy: str = "symmetric",
    *,
    cutoff: int = 30,
    params: GaussianResourceParams | None = None,
    **strategy_kwargs,
) -> HeraldingPlan:
    """Compose the full planning chain.

    ``strategy='fixed'`` takes ``params`` as given (their r_out must match the
    target within 1e-9).
    """
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    if cnorm <= 0:
        raise DomainError("cnorm must be positive")
    if strategy == "fixed":
        if params is None:
            raise DomainError("strategy 'fixed' needs explicit params")
        if abs(herald.r_out(params) - target.r_out_target) > 1e-9:
            raise DomainError(
                f"fixed params give r_out = {herald.r_out(params):.6g}, "
                f"target is {target.r_out_target:.6g}"
            )
    else:
        strategy_kwargs.setdefault("n_detect", max(target.N, 1))
        params = solve_gaussian_params(target.r_out_target, strategy, **strategy_kwargs)
    table = decomposition_table(params, target.N, cutoff)
    cprime = solve_cprime(target, table)
    alphas = alphas_from_cprime(cprime, cnorm)
    canonical = cprime_from_alphas(alphas, cnorm)
    prob = predicted_probability(params, alphas, cnorm, cutoff)
    return HeraldingPlan(
        target=target,
        params=params,
        n_detect=target.N,
        cprime=canonical,
        alphas=alphas,
        cnorm=float(cnorm),
        predicted_prob=prob,
        strategy=strategy,
    )


def verify_plan(plan_: HeraldingPlan, cutoff: int = 30) -> PlanReport:
    """Forward-simulate the plan from its alphas and compare with the target."""
    cprime = cprime_from_alphas(plan_.alphas, plan_.cnorm)
    state = herald.herald_superposition(plan_.params, cprime, cutoff)
    fid = fock.fidelity(state, plan_.target.vector(cutoff))
    prob = predicted_probability(plan_.params, plan_.alphas, plan_.cnorm, cutoff)
    max_alpha = float(np.max(np.abs(plan_.alphas), initial=0.0))
    n_trig = herald.trigger_mean_photons(plan_.params)
    notes = []
    if max_alpha > herald.SMALL_ALPHA:
        notes.append(f"max |alpha| = {max_alpha:.3f} exceeds {herald.SMALL_ALPHA}")
    if n_trig > MAX_TRIGGER_PHOTONS:
        notes.append(f"mean trigger photon number {n_trig:.3f} exceeds {MAX_TRIGGER_PHOTONS}")
    for msg in notes:
        warnings.warn(msg, AssumptionViolated, stacklevel=2)
    return PlanReport(fidelity=float(fid), prob=prob, max_alpha=max_alpha,
                      mean_trigger_photons=n_trig, warnings=notes)
