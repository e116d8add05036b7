"""Volume recovery: weighted basis-pursuit denoising and the minimal-energy baseline.

``solve_bpdn`` minimizes the l1 norm of the wavelet coefficients subject to a
weighted data-fidelity ball of radius epsilon.  It runs Douglas-Rachford
splitting over the coefficient vector: the l1 proximal step is a complex soft
threshold, and the feasibility step is an exact projection onto the
constraint set, computed in closed form thanks to the unitarity of the
sensing/sparsity pair (the constraint touches each acquisition coordinate
separately, so the projection reduces to a scalar Newton solve).  The
returned iterate is always feasible by construction.

``solve_me`` computes the minimum-norm least-squares reconstruction with a
conjugate-gradient iteration on the normal equations of the matrix-free
restricted sensing map; duplicate indices in the multiset are handled by the
adjoint's scatter-add.

Solvers work in complex arithmetic with modulus-based l1; real inputs stay
real to machine precision.  Because the volume container is real, the stored
estimate is the real part of the synthesized solution; ``imag_norm`` reports
the magnitude of what was discarded (zero on noiseless instances) and
``residual_norm``/``l1_norm`` always refer to the complex solver iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .acquisition import MeasurementSet
from .coherence import SamplingPlan, validate_pmf
from .core import Dims, HSVolume
from .transforms import sensing_map, sparsity_map

__all__ = [
    "SolverConfig",
    "RecoveryResult",
    "calibrate_epsilon",
    "solve_bpdn",
    "solve_me",
    "rsnr",
    "snr_to_sigma",
    "export_trace_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and tolerances shared by both solvers.

    ``feasibility_tolerance`` is the relative slack allowed on the constraint
    when declaring convergence; ``objective_tolerance`` is the relative
    objective stall threshold.  ``dr_gamma`` overrides the soft-threshold
    level of the l1 proximal step (default: scaled from the zero-fill
    estimate).
    """

    max_iterations: int = 1500
    feasibility_tolerance: float = 1e-4
    objective_tolerance: float = 1e-5
    verbosity: int = 0
    dr_gamma: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.feasibility_tolerance <= 0 or self.objective_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if self.dr_gamma is not None and self.dr_gamma <= 0:
            raise ValueError("dr_gamma must be > 0 when given")


@dataclass
class RecoveryResult:
    """Solver output.

    ``x_hat`` is the real part of the synthesized estimate (volumes are
    real); ``s_hat`` keeps the full complex coefficient vector, and
    ``imag_norm`` is the 2-norm of the discarded imaginary part.  ``trace``
    rows are (iteration, objective, residual) with the objective being the
    coefficient l1 norm for BPDN and the estimate 2-norm for minimal energy.
    """

    x_hat: HSVolume
    s_hat: np.ndarray
    residual_norm: float
    l1_norm: float
    iterations: int
    converged: bool
    imag_norm: float = 0.0
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def snr_to_sigma(x: HSVolume, snr_db: float) -> float:
    """Noise level producing the requested acquisition SNR for volume ``x``.

    Inverts ``snr = 10 log10(||x||^2 / (sigma^2 n_hs))``; an infinite target
    maps to zero noise.
    """
    energy = float(np.dot(x.data, x.data))
    if energy == 0.0:
        raise ValueError("reference volume is identically zero")
    if math.isinf(snr_db):
        return 0.0
    return math.sqrt(energy / (x.dims.n_hs * 10.0 ** (snr_db / 10.0)))


def rsnr(x: HSVolume, x_hat: HSVolume) -> float:
    """Reconstruction SNR in dB; +inf for a perfect reconstruction."""
    if x.dims != x_hat.dims:
        raise ValueError("volumes have mismatched dims")
    energy = float(np.dot(x.data, x.data))
    if energy == 0.0:
        raise ValueError("reference volume is identically zero")
    err = float(np.dot(x.data - x_hat.data, x.data - x_hat.data))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(energy / err)


def calibrate_epsilon(
    sigma: float,
    pmf: np.ndarray,
    m: int,
    dims: Dims,
    trials: int = 100,
    percentile: float = 0.95,
    seed: int = 0,
) -> float:
    """Empirical percentile of the weighted noise norm over fresh draws.

    Each trial draws an independent index multiset from ``pmf`` and an
    independent complex noise vector, then evaluates the weighted noise
    2-norm; the requested empirical percentile is returned.
    """
    if trials < 10:
        raise ValueError(f"trials must be >= 10, got {trials}")
    if not 0.0 < percentile < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {percentile}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    pmf = validate_pmf(pmf)
    if pmf.size != dims.n_hs:
        raise ValueError(f"pmf has {pmf.size} entries, expected {dims.n_hs}")
    if sigma == 0.0:
        return 0.0
    vals = np.empty(trials)
    for t in range(trials):
        g = rng.generator(seed, rng.EPSILON, t)
        u = g.random(m)
        idx0 = np.minimum(np.searchsorted(np.cumsum(pmf), u, side="right"), pmf.size - 1)
        noise = g.normal(0.0, sigma, size=(2, m))
        w = 1.0 / np.sqrt(pmf[idx0])
        vals[t] = math.sqrt(float(np.sum(w * w * (noise[0] ** 2 + noise[1] ** 2))))
    return float(np.quantile(vals, percentile))


# ---------------------------------------------------------------------------
# Weighted-ball projection in acquisition coordinates
# ---------------------------------------------------------------------------


class _BallProjection:
    """Exact projection onto {t : sum_j w_j^2 |t_{omega_j} - y_j|^2 <= eps^2}.

    Coordinates are grouped by unique sampled index; the constraint couples a
    coordinate only to the mean of its measurements plus an irreducible
    within-duplicate spread.  The Lagrange multiplier solves a scalar convex
    secular equation by guarded Newton from zero (monotone, never
    overshooting).
    """

    def __init__(self, ms: MeasurementSet, plan: SamplingPlan, epsilon: float):
        idx0 = ms.omega - 1
        order = np.argsort(idx0, kind="stable")
        sorted_idx = idx0[order]
        uniq, starts, counts = np.unique(sorted_idx, return_index=True, return_counts=True)
        y_sorted = ms.y[order]
        sums = np.add.reduceat(y_sorted, starts)
        self.uniq = uniq
        self.counts = counts.astype(np.float64)
        self.mean_y = sums / counts
        w = 1.0 / np.sqrt(plan.pmf[uniq])  # duplicates share the weight of their index
        self.wsq = w * w
        self.b = self.wsq * self.counts
        # within-duplicate spread, via explicit deviations to avoid cancellation
        dev = y_sorted - np.repeat(self.mean_y, counts)
        self.irreducible = float(np.sum(np.repeat(self.wsq, counts) * np.abs(dev) ** 2))
        self.epsilon = float(epsilon)
        self.feasible = self.irreducible <= self.epsilon**2 * (1 + 1e-12) + 1e-300

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, float]:
        """Project ``t`` in place of its sampled coordinates; returns (t_hat, residual)."""
        eps_sq = self.epsilon**2
        diff = t[self.uniq] - self.mean_y
        a = self.b * np.abs(diff) ** 2
        q0 = float(a.sum()) + self.irreducible
        if q0 <= eps_sq:
            return t, math.sqrt(max(q0, 0.0))
        if self.epsilon == 0.0 or not self.feasible:
            t_hat = t.copy()
            t_hat[self.uniq] = self.mean_y
            return t_hat, math.sqrt(self.irreducible)
        lam = 0.0
        val = q0 - eps_sq
        for _ in range(200):
            denom = 1.0 + self.b * lam
            grad = -2.0 * float(np.sum(a * self.b / denom**3))
            step = -val / grad
            lam += step
            val = float(np.sum(a / (1.0 + self.b * lam) ** 2)) + self.irreducible - eps_sq
            if val <= eps_sq * 1e-14 or step <= lam * 1e-15:
                break
        t_hat = t.copy()
        shrink = 1.0 / (1.0 + self.b * lam)
        t_hat[self.uniq] = self.mean_y + diff * shrink
        resid_sq = float(np.sum(a * shrink**2)) + self.irreducible
        return t_hat, math.sqrt(max(resid_sq, 0.0))


def _soft_threshold(v: np.ndarray, gamma: float) -> np.ndarray:
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > gamma, 1.0 - gamma / mag, 0.0)
    return v * scale


def _check_plan(ms: MeasurementSet, plan: SamplingPlan) -> None:
    if plan.pmf.size != ms.dims.n_hs:
        raise ValueError(f"plan covers {plan.pmf.size} indices, measurements need {ms.dims.n_hs}")
    if not np.array_equal(ms.omega, plan.omega):
        raise ValueError("sampling plan does not match the measurement multiset")


def solve_bpdn(
    ms: MeasurementSet,
    plan: SamplingPlan,
    epsilon: float,
    cfg: SolverConfig | None = None,
) -> RecoveryResult:
    """Minimize the coefficient l1 norm subject to the weighted residual ball.

    Returns a feasible point whenever the constraint set is nonempty; if the
    iteration budget runs out before the optimality test passes, the result
    has ``converged=False`` (never a silently wrong answer).  With
    ``epsilon >= ||D y||`` the exact solution (zero) is returned immediately.
    """
    cfg = cfg or SolverConfig()
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    _check_plan(ms, plan)
    dims = ms.dims
    sens = sensing_map(dims)
    spar = sparsity_map(dims)

    def g_fwd(s: np.ndarray) -> np.ndarray:
        return sens.kernel(spar.kernel(s, False), False)

    def g_adj(t: np.ndarray) -> np.ndarray:
        return spar.kernel(sens.kernel(t, True), True)

    project = _BallProjection(ms, plan, epsilon)

    if cfg.dr_gamma is not None:
        gamma = cfg.dr_gamma
    else:
        zero_fill = np.zeros(dims.n_hs, dtype=np.complex128)
        zero_fill[project.uniq] = project.mean_y
        gamma = 0.05 * float(np.abs(g_adj(zero_fill)).max())
        if gamma == 0.0:
            gamma = 1.0  # zero data: any level keeps the zero solution

    v = np.zeros(dims.n_hs, dtype=np.complex128)
    s_best = np.zeros(dims.n_hs, dtype=np.complex128)
    resid = 0.0
    l1 = 0.0
    trace: list[tuple[int, float, float]] = []
    recent: list[float] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        x = _soft_threshold(v, gamma)
        t_hat, resid = project(g_fwd(2.0 * x - v))
        z = g_adj(t_hat)
        v += z - x
        s_best = z
        l1 = float(np.abs(z).sum())
        trace.append((it, l1, resid))
        if cfg.verbosity >= 2:
            print(f"  bpdn it={it} l1={l1:.6e} resid={resid:.6e}")
        gap = float(np.linalg.norm(x - z))
        recent.append(l1)
        if len(recent) > 10:
            recent.pop(0)
        obj_stable = len(recent) == 10 and (
            max(recent) - min(recent) <= cfg.objective_tolerance * max(1.0, l1)
        )
        feasible_now = resid <= epsilon * (1.0 + cfg.feasibility_tolerance) + 1e-12
        if gap <= cfg.feasibility_tolerance * max(1.0, float(np.linalg.norm(z))) and obj_stable and feasible_now:
            converged = True
            break

    synthesis = spar.kernel(s_best, False)
    x_hat = HSVolume(dims, np.ascontiguousarray(synthesis.real))
    return RecoveryResult(
        x_hat=x_hat,
        s_hat=s_best,
        residual_norm=resid,
        l1_norm=l1,
        iterations=it,
        converged=converged,
        imag_norm=float(np.linalg.norm(synthesis.imag)),
        trace=trace,
    )


def solve_me(
    ms: MeasurementSet,
    plan: SamplingPlan | None = None,
    cfg: SolverConfig | None = None,
) -> RecoveryResult:
    """Minimum-norm least-squares reconstruction of the restricted sensing map.

    Conjugate-gradient on the normal equations, started from zero so the
    iterates stay in the row space and the limit is the pseudo-inverse
    solution.  Duplicate indices are accumulated by the adjoint, which is
    what makes the normal equations those of the true repeated-row operator.
    """
    cfg = cfg or SolverConfig()
    if plan is not None:
        _check_plan(ms, plan)
    dims = ms.dims
    sens = sensing_map(dims)
    idx0 = ms.omega - 1

    def b_fwd(x: np.ndarray) -> np.ndarray:
        return sens.kernel(x, False)[idx0]

    def b_adj(r: np.ndarray) -> np.ndarray:
        acc = np.zeros(dims.n_hs, dtype=np.complex128)
        np.add.at(acc, idx0, r)
        return sens.kernel(acc, True)

    x = np.zeros(dims.n_hs, dtype=np.complex128)
    r = ms.y.astype(np.complex128).copy()
    s = b_adj(r)
    p = s.copy()
    gamma = float(np.vdot(s, s).real)
    target = 1e-12 * math.sqrt(gamma) if gamma > 0 else 0.0
    trace: list[tuple[int, float, float]] = []
    converged = gamma == 0.0
    it = 0
    while not converged and it < cfg.max_iterations:
        it += 1
        q = b_fwd(p)
        denom = float(np.vdot(q, q).real)
        if denom == 0.0:
            converged = True
            break
        alpha = gamma / denom
        x += alpha * p
        r -= alpha * q
        s = b_adj(r)
        gamma_new = float(np.vdot(s, s).real)
        trace.append((it, float(np.linalg.norm(x)), float(np.linalg.norm(r))))
        if cfg.verbosity >= 2:
            print(f"  me it={it} |x|={np.linalg.norm(x):.6e} |r|={np.linalg.norm(r):.6e}")
        if math.sqrt(gamma_new) <= target:
            converged = True
            break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new

    s_hat = sparsity_map(dims).kernel(x, True)
    x_hat = HSVolume(dims, np.ascontiguousarray(x.real))
    if plan is not None:
        w = 1.0 / np.sqrt(plan.pmf[idx0])
        residual = float(np.linalg.norm(w * (ms.y - b_fwd(x))))
    else:
        residual = float(np.linalg.norm(ms.y - b_fwd(x)))
    return RecoveryResult(
        x_hat=x_hat,
        s_hat=s_hat,
        residual_norm=residual,
        l1_norm=float(np.abs(s_hat).sum()),
        iterations=it,
        converged=converged,
        imag_norm=float(np.linalg.norm(x.imag)),
        trace=trace,
    )


def export_trace_csv(result: RecoveryResult, path) -> None:
    """Write the solver trace as CSV (iteration, objective, residual)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iteration,objective,residual\n")
        for it, obj, res in result.trace:
            fh.write(f"{it},{obj!r},{res!r}\n")
