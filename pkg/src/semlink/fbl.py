"""Joint allocation under finite-blocklength transmission.

The short-block rate penalty is the inverse-Q dispersion term; its square
root is replaced by the segment-wise linear surrogate min((gamma+1)/2, 1),
which is tangent to the exact curve at gamma = sqrt(2) - 1 and upper-bounds
it everywhere. Two power-stage models are provided:

* ``tangent`` (default): inverts the exact log rate minus the linearized
  dispersion penalty. With a vanishing penalty (BLER = 0.5, or block length
  to infinity) this is bit-for-bit the ideal-regime solver.
* ``linear``: the closed-form piecewise update that additionally replaces
  log2(1+gamma) by gamma/ln2, with per-regime normalizers. Regimes are
  classified by the previous iterate's SNR; the normalizer sums can run over
  same-regime blocks only (default) or over all blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

from .ideal import (
    CAP_LADDER,
    DEFAULT_SETTINGS,
    LN2,
    AllocProblem,
    AllocationError,
    AllocationResult,
    SolverSettings,
    exchange_polish,
    integerize,
    solve_bits,
)
from .quantizer import weighted_error_bound

__all__ = [
    "FblParams",
    "q_function",
    "q_inverse",
    "dispersion_exact",
    "dispersion_approx",
    "penalty_coeff",
    "alpha_coeff",
    "bcd_solve_fbl",
    "lc_power_fbl",
    "solve_latency_fbl",
    "kkt_report_fbl",
]


def q_function(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p):
    """Inverse of the Gaussian Q-function, refined by one Newton step."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("probability must lie strictly inside (0, 1)")
    x = math.sqrt(2.0) * erfcinv(2.0 * p)
    pdf = np.exp(-0.5 * x**2) / math.sqrt(2.0 * math.pi)
    x = x + (q_function(x) - p) / pdf
    return float(x) if np.isscalar(p) or p.ndim == 0 else x


def dispersion_exact(gamma):
    """sqrt of the channel dispersion, sqrt(1 - 1/(1+gamma)^2)."""
    gamma = np.asarray(gamma, dtype=float)
    return np.sqrt(np.maximum(1.0 - 1.0 / (1.0 + gamma) ** 2, 0.0))


def dispersion_approx(gamma):
    """Segment-wise linear surrogate min((gamma+1)/2, 1)."""
    gamma = np.asarray(gamma, dtype=float)
    return np.minimum(0.5 * (gamma + 1.0), 1.0)


def penalty_coeff(bler, l_c):
    """Dispersion penalty coefficient Qinv(bler) / (ln2 * sqrt(l_c))."""
    return q_inverse(bler) / (LN2 * math.sqrt(l_c))


def alpha_coeff(alpha):
    """Same coefficient written through alpha: 2 (1 - alpha) / ln2."""
    return 2.0 * (1.0 - np.asarray(alpha, dtype=float)) / LN2


@dataclass(frozen=True)
class FblParams:
    """Per-block reliability targets and the derived linearization constants."""

    bler: np.ndarray
    l_c: float
    qinv: np.ndarray
    alpha: np.ndarray

    @classmethod
    def create(cls, bler, l_c: float, g: int | None = None) -> "FblParams":
        bler = np.atleast_1d(np.asarray(bler, dtype=float))
        if g is not None and bler.size == 1:
            bler = np.full(g, bler[0])
        if np.any(bler <= 0) or np.any(bler >= 1):
            raise ValueError("block error rates must lie strictly inside (0, 1)")
        if l_c < 1:
            raise ValueError("l_c must be >= 1")
        qinv = np.asarray([q_inverse(m) for m in bler])
        alpha = 1.0 - 0.5 * qinv / math.sqrt(l_c)
        return cls(bler=bler, l_c=float(l_c), qinv=qinv, alpha=alpha)

    @property
    def coeff(self) -> np.ndarray:
        """Penalty coefficient per block, equal to 2(1-alpha)/ln2."""
        return self.qinv / (LN2 * math.sqrt(self.l_c))


def _gamma_for_rate(rate, coeff, iters: int = 30):
    """Smallest SNR whose dispersion-linearized spectral efficiency meets ``rate``.

    Solves rate = log2(1+gamma) - coeff * min((gamma+1)/2, 1) per block.
    Blocks whose rate demand is at or past the kink invert in closed form;
    the sub-kink segment is bisected on [0, 1]. Blocks with alpha <= 0.5
    cannot sustain a positive rate below the kink and are held at or above
    the regime boundary.
    """
    rate = np.asarray(rate, dtype=float)
    coeff = np.broadcast_to(np.asarray(coeff, dtype=float), rate.shape).copy()
    gamma = np.zeros_like(rate)

    forced_high = coeff * LN2 > 1.0  # alpha below one half
    with np.errstate(over="ignore"):
        closed = np.exp2(rate + coeff) - 1.0
    high = (rate >= 1.0 - coeff) | forced_high
    gamma[high] = np.maximum(closed[high], 1.0)

    low = ~high & (rate > 0)
    if np.any(low):
        exact = low & (coeff == 0.0)
        gamma[exact] = np.exp2(rate[exact]) - 1.0
        lowb = low & (coeff > 0.0)
        if np.any(lowb):
            # Newton from the kink: the objective is increasing and concave on
            # [0, 1] (alpha > 1/2 here), so after the first step the iterates
            # approach the root monotonically from the left
            r, c = rate[lowb], coeff[lowb]
            gm = np.ones_like(r)
            for _ in range(iters):
                f = np.log2(1.0 + gm) - c * 0.5 * (gm + 1.0) - r
                fp = np.maximum(1.0 / ((1.0 + gm) * LN2) - 0.5 * c, 1e-300)
                gm = np.clip(gm - f / fp, 0.0, 1.0)
            gamma[lowb] = gm
    return gamma


def solve_latency_fbl(bits, gains, fbl: FblParams, d, df, sigma2, power_sum, settings: SolverSettings = DEFAULT_SETTINGS):
    """Fixed-bit power stage under the tangent rate model.

    Bisects the worst-case latency against the power budget exactly like the
    ideal solver, with the per-block SNR demand coming from the
    dispersion-linearized rate inversion. Raises when the per-block power
    floors already exceed the budget.
    """
    bits = np.asarray(bits, dtype=float)
    gains = np.asarray(gains, dtype=float)
    coeff = np.broadcast_to(fbl.coeff, bits.shape)
    active = bits > 0
    if not np.any(active):
        return 0.0, np.zeros_like(gains)

    def floor_report():
        gamma_floor = _gamma_for_rate(np.full(bits.shape, 1e-12), coeff)
        floors = np.where(active, sigma2 * gamma_floor / gains**2, 0.0)
        deficit = {int(i): float(floors[i]) for i in np.flatnonzero(active)}
        return float(floors.sum()), deficit

    def powers_at(y):
        rate = np.where(active, d * bits / (y * df), 0.0)
        gamma = _gamma_for_rate(rate, coeff)
        # same float path as the ideal power inversion so a vanishing penalty
        # reproduces it bit for bit
        p = sigma2 / gains**2 * gamma
        return np.where(active, p, 0.0)

    def total(y):
        return float(powers_at(y).sum())

    lo = hi = 1.0
    for _ in range(settings.max_expansions):
        if total(lo) >= power_sum:
            break
        lo /= settings.expand_factor
    else:
        raise AllocationError("fbl latency bisection: no lower bracket")
    hi = lo
    for _ in range(settings.max_expansions):
        if total(hi) <= power_sum:
            break
        hi *= settings.expand_factor
    else:
        floor_sum, deficit = floor_report()
        raise AllocationError(
            f"power floors {floor_sum:.6g} exceed the budget {power_sum:.6g}; per-block floors: {deficit}"
        )
    for _ in range(settings.bisect_iters):
        mid = 0.5 * (lo + hi)
        if total(mid) >= power_sum:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    return y, powers_at(y)


def _linear_power_stage(bits, gains, fbl: FblParams, regime_high, d, df, df0, sigma2, power_sum, normalizer, settings):
    """Closed-form piecewise power update with a bisected power multiplier."""
    bits = np.asarray(bits, dtype=float)
    alpha = np.broadcast_to(fbl.alpha, bits.shape)
    active = bits > 0
    theta = math.sqrt(df0 / (sigma2 * d * LN2))

    low_mask = active & ~regime_high
    high_mask = active & regime_high
    if normalizer == "regime":
        phi_sum = float(np.sum(bits[low_mask] / (alpha[low_mask] * gains[low_mask] ** 2)))
        xi_sum = float(np.sum(bits[high_mask] / gains[high_mask] ** 2))
    elif normalizer == "all":
        phi_sum = float(np.sum(bits[active] / (alpha[active] * gains[active] ** 2)))
        xi_sum = float(np.sum(bits[active] / gains[active] ** 2))
    else:
        raise ValueError("normalizer must be 'regime' or 'all'")
    phi = 1.0 / math.sqrt(phi_sum) if phi_sum > 0 else 0.0
    xi = 1.0 / math.sqrt(xi_sum) if xi_sum > 0 else 0.0

    floors = np.where(
        low_mask,
        sigma2 * (1.0 - alpha) / (alpha * gains**2),
        np.where(high_mask, 2.0 * sigma2 * (1.0 - alpha) / gains**2, 0.0),
    )
    floor_sum = float(floors.sum())
    if floor_sum >= power_sum:
        deficit = {int(i): float(floors[i]) for i in np.flatnonzero(active)}
        raise AllocationError(
            f"power floors {floor_sum:.6g} exceed the budget {power_sum:.6g}; per-block floors: {deficit}"
        )

    def powers_at(tau):
        st = math.sqrt(tau)
        p_low = sigma2 * LN2 / (alpha * gains**2) * (d * theta * phi * bits / (df * st) + (1.0 - alpha) / LN2)
        p_high = sigma2 * LN2 / gains**2 * (d * theta * xi * bits / (df * st) + 2.0 * (1.0 - alpha) / LN2)
        return np.where(low_mask, p_low, np.where(high_mask, p_high, 0.0))

    def total(tau):
        return float(powers_at(tau).sum())

    lo = hi = 1.0
    for _ in range(settings.max_expansions):
        if total(lo) >= power_sum:
            break
        lo /= settings.expand_factor
    else:
        raise AllocationError("linear power stage: no lower bracket on tau")
    hi = lo
    for _ in range(settings.max_expansions):
        if total(hi) <= power_sum:
            break
        hi *= settings.expand_factor
    else:
        raise AllocationError("linear power stage: budget unreachable above floors")
    for _ in range(settings.bisect_iters):
        mid = 0.5 * (lo + hi)
        if total(mid) >= power_sum:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    powers = powers_at(tau)
    y = float(np.max(_linear_latency(bits, gains, alpha, regime_high, powers, d, df, sigma2)))
    return y, powers, tau


def _linear_latency(bits, gains, alpha, regime_high, powers, d, df, sigma2):
    gamma = powers * gains**2 / sigma2
    denom = np.where(regime_high, gamma - 2.0 + 2.0 * alpha, gamma * alpha + alpha - 1.0)
    lat = np.where(bits > 0, d * bits * LN2 / (df * np.where(denom > 0, denom, np.nan)), 0.0)
    return np.where(np.isnan(lat), np.inf, lat)


def _tangent_latency(bits, gains, coeff, powers, d, df, sigma2):
    gamma = powers * gains**2 / sigma2
    rate = df * (np.log2(1.0 + gamma) - coeff * dispersion_approx(gamma))
    return np.where(np.asarray(bits) > 0, d * np.asarray(bits) / np.where(rate > 0, rate, np.nan), 0.0)


def bcd_solve_fbl(
    problem: AllocProblem,
    fbl: FblParams,
    scores=None,
    rate_model: str = "tangent",
    normalizer: str = "regime",
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> AllocationResult:
    """Block-coordinate descent for the finite-blocklength problem.

    The bit caps always use the exact dispersion penalty; the power stage
    follows ``rate_model``. The objective trace and a non-monotonicity
    counter are recorded (regime flips under the linear model can break
    monotonicity; the counter exposes this).
    """
    g = problem.g
    gains = problem.eq_gains
    w = problem.weights
    d, df, df0, sigma2 = problem.d, problem.df, problem.df0, problem.sigma2
    power_sum = problem.power_sum
    target_pb = problem.target_pb
    if scores is None:
        scores = w
    alpha = np.broadcast_to(fbl.alpha if fbl.alpha.size == g else np.full(g, fbl.alpha[0]), (g,))
    coeff = np.broadcast_to(fbl.coeff if fbl.coeff.size == g else np.full(g, fbl.coeff[0]), (g,))
    fbl_g = FblParams(bler=np.broadcast_to(fbl.bler, (g,)) if fbl.bler.size != g else fbl.bler,
                      l_c=fbl.l_c,
                      qinv=np.broadcast_to(fbl.qinv, (g,)) if fbl.qinv.size != g else fbl.qinv,
                      alpha=alpha)

    # same iteration shape as the ideal solver: uniform powers, first bit
    # stage uncapped, then a keep-best ladder of cap levels per iteration
    p_prev = np.full(g, power_sum / g)
    y_prev = None

    trace = []
    non_monotone = 0
    bits = np.full(g, target_pb / g)
    powers, y, nu, tau = p_prev, float("nan"), float("nan"), float("nan")
    prev_obj = None
    budget_met = True

    def power_stage(cand_bits, gamma_prev):
        if rate_model == "tangent":
            sy, sp = solve_latency_fbl(cand_bits, gains, fbl_g, d, df, sigma2, power_sum, settings)
            st = _tau_from_normalization(cand_bits, gains, alpha, sp, sy, d, df0, sigma2)
            return sy, sp, st
        if rate_model == "linear":
            regime_high = (gamma_prev >= 1.0) | (alpha <= 0.5)
            return _linear_power_stage(
                cand_bits, gains, fbl_g, regime_high, d, df, df0, sigma2, power_sum, normalizer, settings
            )
        raise ValueError("rate_model must be 'tangent' or 'linear'")

    for k in range(problem.k_iters):
        gamma_prev = p_prev * gains**2 / sigma2
        if y_prev is None:
            cap_levels = [None]
        else:
            cap_levels = [omega * y_prev for omega in CAP_LADDER]
        shannon = np.log2(1.0 + gamma_prev)
        pen = fbl_g.qinv / (LN2 * math.sqrt(fbl_g.l_c)) * dispersion_exact(gamma_prev)
        best = None
        for y_cap in cap_levels:
            if y_cap is None:
                caps = np.full(g, float(problem.b_max))
            else:
                caps = np.clip(y_cap * df / d * (shannon - pen), 0.0, float(problem.b_max))
            cand_bits, cand_nu, cand_met = solve_bits(w, caps, problem.b_min, target_pb, problem.u_range, settings)
            if not cand_met and best is not None and best[3]:
                continue  # a short bit budget fakes a low latency; keep budget-met iterates
            cand_y, cand_powers, cand_tau = power_stage(cand_bits, gamma_prev)
            cand_eq = weighted_error_bound(cand_bits, w, d, problem.u_min, problem.u_max)
            cand_obj = float(cand_y + cand_eq)
            if best is None or (cand_met and not best[3]) or (cand_met == best[3] and cand_obj < best[0]):
                best = (cand_obj, cand_bits, cand_nu, cand_met, cand_y, cand_powers, cand_tau)
        obj = best[0]
        if prev_obj is None or obj <= prev_obj:
            _, bits, nu, budget_met, y, powers, tau = best
            prev_obj = obj
        elif obj > prev_obj + 1e-9:
            non_monotone += 1  # best candidate would have regressed; iterate kept
        eq = weighted_error_bound(bits, w, d, problem.u_min, problem.u_max)
        trace.append({"k": k + 1, "y": float(y), "e_q": float(eq), "objective": float(y + eq)})
        frozen = y_prev is not None and y == y_prev and np.array_equal(powers, p_prev)
        p_prev, y_prev = powers, y
        if frozen:
            for kk in range(k + 1, problem.k_iters):
                trace.append({"k": kk + 1, "y": float(y), "e_q": float(eq), "objective": float(y + eq)})
            break

    bits_int = integerize(bits, scores, problem.b_min, problem.b_max, problem.b_target, d)
    if rate_model == "tangent":

        def stage(b):
            return solve_latency_fbl(b, gains, fbl_g, d, df, sigma2, power_sum, settings)

        bits_int, y_int, p_int = exchange_polish(
            bits_int, w, gains, d, df, problem.b_min, problem.b_max, problem.u_min, problem.u_max, stage
        )
    else:
        p_int, y_int = lc_power_fbl(bits_int, gains, fbl_g, d, df, df0, sigma2, power_sum, settings)
    eq_int = weighted_error_bound(bits_int, w, d, problem.u_min, problem.u_max)
    eq_cont = weighted_error_bound(bits, w, d, problem.u_min, problem.u_max)

    gamma_final = p_int * gains**2 / sigma2
    return AllocationResult(
        bits_cont=bits,
        bits_int=bits_int,
        powers=p_int,
        y=float(y_int),
        nu=float(nu),
        tau=float(tau),
        objective=float(y_int + eq_int),
        iterations=trace,
        feasible=True,
        cont_powers=powers,
        cont_y=float(y),
        cont_objective=float(y + eq_cont),
        diagnostics={
            "bler": [float(m) for m in fbl_g.bler],
            "l_c": fbl_g.l_c,
            "alpha": [float(a) for a in alpha],
            "regime_high": [bool(r) for r in gamma_final >= 1.0],
            "non_monotonic_steps": int(non_monotone),
            "rate_model": rate_model,
            "bit_budget_met_cont": bool(budget_met),
        },
        settings=settings.to_dict(),
    )


def lc_power_fbl(
    bits,
    eq_gains,
    fbl: FblParams,
    d,
    df,
    df0,
    sigma2,
    power_sum,
    settings: SolverSettings = DEFAULT_SETTINGS,
):
    """Single-shot piecewise power allocation for fixed bits.

    Both normalizer sums run over all blocks; the branch of each block is
    decided by its candidate low-branch SNR at the current multiplier.
    Returns ``(powers, worst_case_linearized_latency)``.
    """
    bits = np.asarray(bits, dtype=float)
    gains = np.asarray(eq_gains, dtype=float)
    g = bits.size
    alpha = np.broadcast_to(fbl.alpha if fbl.alpha.size == g else np.full(g, fbl.alpha[0]), (g,))
    active = bits > 0
    if not np.any(active):
        return np.zeros_like(gains), 0.0
    theta = math.sqrt(df0 / (sigma2 * d * LN2))
    phi_sum = float(np.sum(bits[active] / (alpha[active] * gains[active] ** 2)))
    xi_sum = float(np.sum(bits[active] / gains[active] ** 2))
    phi = 1.0 / math.sqrt(phi_sum)
    xi = 1.0 / math.sqrt(xi_sum)

    def state_at(tau):
        st = math.sqrt(tau)
        gbar = LN2 / alpha * (d * bits * theta * phi / (df * st)) + (1.0 - alpha) / alpha
        p_low = sigma2 * gbar / gains**2
        p_high = sigma2 * LN2 / gains**2 * (d * bits * theta * xi / (df * st) + 2.0 * (1.0 - alpha) / LN2)
        low = gbar < 1.0
        powers = np.where(active, np.where(low, p_low, p_high), 0.0)
        return powers, low

    def total(tau):
        return float(state_at(tau)[0].sum())

    floors = np.where(active & (alpha > 0.5), sigma2 * (1.0 - alpha) / (alpha * gains**2), 0.0)
    if float(floors.sum()) >= power_sum:
        raise AllocationError(
            f"power floors {float(floors.sum()):.6g} exceed the budget {power_sum:.6g}"
        )

    lo = hi = 1.0
    for _ in range(settings.max_expansions):
        if total(lo) >= power_sum:
            break
        lo /= settings.expand_factor
    else:
        raise AllocationError("lc power stage: no lower bracket on tau")
    hi = lo
    for _ in range(settings.max_expansions):
        if total(hi) <= power_sum:
            break
        hi *= settings.expand_factor
    else:
        raise AllocationError("lc power stage: budget unreachable above floors")
    for _ in range(settings.bisect_iters):
        mid = 0.5 * (lo + hi)
        if total(mid) >= power_sum:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    powers, low = state_at(tau)
    lat = _linear_latency(bits, gains, alpha, ~low, powers, d, df, sigma2)
    return powers, float(np.max(lat))


def _tau_from_normalization(bits, gains, alpha, powers, y, d, df0, sigma2):
    """Power multiplier implied by the unit sum of the latency multipliers."""
    if y <= 0:
        return float("nan")
    gamma = powers * np.asarray(gains) ** 2 / sigma2
    den = np.where(gamma >= 1.0, 1.0, alpha)
    s = float(np.sum(np.asarray(bits) / (den * np.asarray(gains) ** 2)))
    if s <= 0:
        return float("nan")
    return df0 * y**2 / (sigma2 * d * LN2 * s)


def kkt_report_fbl(problem: AllocProblem, fbl: FblParams, bits, powers, y, rate_model: str = "tangent") -> dict:
    """Multiplier and active-constraint diagnostics for a finite-blocklength solution."""
    gains = problem.eq_gains
    g = problem.g
    alpha = np.broadcast_to(fbl.alpha if fbl.alpha.size == g else np.full(g, fbl.alpha[0]), (g,))
    coeff = alpha_coeff(alpha)
    bits = np.asarray(bits, dtype=float)
    powers = np.asarray(powers, dtype=float)
    gamma = powers * gains**2 / problem.sigma2
    regime_high = gamma >= 1.0
    if rate_model == "tangent":
        lat = _tangent_latency(bits, gains, coeff, powers, problem.d, problem.df, problem.sigma2)
    else:
        lat = _linear_latency(bits, gains, alpha, regime_high, powers, problem.d, problem.df, problem.sigma2)
    active = lat[bits > 0]
    resid = float(np.max(np.abs(active - y)) / y) if active.size and y > 0 else 0.0
    tau = _tau_from_normalization(bits, gains, alpha, powers, y, problem.d, problem.df0, problem.sigma2)
    den = np.where(regime_high, 1.0, alpha)
    rho = tau * problem.sigma2 * problem.d * LN2 / (problem.df0 * y**2) * bits / (den * gains**2)
    power_residual = abs(float(np.sum(powers * problem.spb)) - problem.p_tot) / problem.p_tot
    return {
        "latency_residual": resid,
        "rho": rho,
        "rho_sum": float(rho.sum()),
        "tau": float(tau),
        "power_residual": float(power_residual),
        "regime_high": regime_high,
    }
