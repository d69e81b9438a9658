"""Joint bit and power allocation under ideal (error-free) transmission.

Block coordinate descent on the continuous relaxation: the bit step is a
weighted reverse-water-filling solved by bisecting a Lagrange multiplier;
the power/latency step equalizes per-block latencies by bisecting the
auxiliary worst-case latency against the power budget. The continuous
solution is then rounded to integers and the powers re-solved so the
deployed pair stays mutually consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .quantizer import weighted_error_bound

__all__ = [
    "AllocProblem",
    "AllocationResult",
    "AllocationError",
    "SolverSettings",
    "bcd_solve",
    "integerize",
    "power_solve_fixed_bits",
    "bits_for_multiplier",
    "solve_bits",
    "solve_latency",
    "tau_multiplier",
    "kkt_report",
]

LN2 = math.log(2.0)


class AllocationError(RuntimeError):
    """Raised when a solver cannot establish a feasible bracket."""


@dataclass(frozen=True)
class SolverSettings:
    """Bisection contract: geometric bracket expansion then fixed-count bisection."""

    bisect_iters: int = 160
    nu_iters: int = 120
    expand_factor: float = 10.0
    max_expansions: int = 60

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_SETTINGS = SolverSettings()

# Cap levels probed per iteration, as fractions of the incumbent latency.
CAP_LADDER = (1.0, 0.95, 0.9, 0.85, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3)


@dataclass(frozen=True)
class AllocProblem:
    """One joint allocation instance over G blocks.

    ``eq_gains[i]`` is the equivalent gain of the block carrying patch i and
    ``weights[i]`` its importance weight, so both vectors are indexed by
    patch. ``p_tot`` is the per-OFDM-symbol power budget; the per-block
    constraint constant is ``p_tot * G / (N_s F) = p_tot / spb``.
    """

    eq_gains: np.ndarray
    weights: np.ndarray
    d: int
    b_target: int
    b_min: int = 1
    b_max: int = 8
    df0: float = 15e3
    spb: int = 1
    sigma2: float = 1.0
    p_tot: float = 1.0
    u_min: float = 0.0
    u_max: float = 1.0
    k_iters: int = 5

    def __post_init__(self):
        gains = np.asarray(self.eq_gains, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if gains.ndim != 1 or weights.shape != gains.shape:
            raise ValueError("eq_gains and weights must be 1-D and equally sized")
        if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
            raise ValueError("eq_gains must be finite and strictly positive")
        if np.any(weights <= 0) or np.any(weights > 1):
            raise ValueError("weights must lie in (0, 1]")
        if self.b_min < 1 or self.b_min > self.b_max:
            raise ValueError("need 1 <= b_min <= b_max")
        if self.b_target % self.d != 0:
            raise ValueError("b_target must be an integer multiple of d")
        g = gains.size
        if not self.b_min * g * self.d <= self.b_target <= self.b_max * g * self.d:
            raise ValueError("b_target outside [b_min*G*D, b_max*G*D]")
        if self.df0 <= 0 or self.spb < 1 or self.sigma2 <= 0 or self.p_tot <= 0:
            raise ValueError("df0, spb, sigma2 and p_tot must be positive")
        if self.u_max < self.u_min:
            raise ValueError("u_max must be >= u_min")
        if self.k_iters < 1:
            raise ValueError("k_iters must be >= 1")
        object.__setattr__(self, "eq_gains", gains)
        object.__setattr__(self, "weights", weights)

    @property
    def g(self) -> int:
        return self.eq_gains.size

    @property
    def df(self) -> float:
        """Effective bandwidth per block in Hz."""
        return self.spb * self.df0

    @property
    def power_sum(self) -> float:
        """Right-hand side of the reduced power constraint, sum over P[i]."""
        return self.p_tot / self.spb

    @property
    def u_range(self) -> float:
        return self.u_max - self.u_min

    @property
    def target_pb(self) -> int:
        """Bit budget in patch-bit units."""
        return self.b_target // self.d


@dataclass
class AllocationResult:
    bits_cont: np.ndarray
    bits_int: np.ndarray
    powers: np.ndarray
    y: float
    nu: float
    tau: float
    objective: float
    iterations: list
    feasible: bool
    cont_powers: np.ndarray
    cont_y: float
    cont_objective: float
    diagnostics: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "bits_cont": [float(b) for b in self.bits_cont],
            "bits_int": [int(b) for b in self.bits_int],
            "powers": [float(p) for p in self.powers],
            "y": float(self.y),
            "nu": float(self.nu),
            "tau": float(self.tau),
            "objective": float(self.objective),
            "iterations": self.iterations,
            "feasible": bool(self.feasible),
            "cont_y": float(self.cont_y),
            "cont_objective": float(self.cont_objective),
            "diagnostics": self.diagnostics,
            "settings": self.settings,
        }


def _power_needed(y: float, bits, gains, d, df, sigma2):
    """Per-block power that makes every latency constraint active at y."""
    with np.errstate(over="ignore"):
        return sigma2 / gains**2 * (np.exp2(d * np.asarray(bits, dtype=float) / (y * df)) - 1.0)


def solve_latency(bits, gains, d, df, sigma2, power_sum, settings: SolverSettings = DEFAULT_SETTINGS):
    """Bisect the worst-case latency y so the exact power inversion meets the
    budget, then read the powers off the active constraints.

    The budget map y -> sum of required powers is strictly decreasing, from
    +inf at y -> 0 to 0 at y -> inf, so a bracket always exists for a
    positive budget.
    """
    bits = np.asarray(bits, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if np.all(bits <= 0):
        return 0.0, np.zeros_like(gains)

    def total(y):
        return float(np.sum(_power_needed(y, bits, gains, d, df, sigma2)))

    lo = hi = 1.0
    for _ in range(settings.max_expansions):
        if total(lo) >= power_sum:
            break
        lo /= settings.expand_factor
    else:
        raise AllocationError(f"latency bisection: no lower bracket below {lo:.3e}")
    hi = lo
    for _ in range(settings.max_expansions):
        if total(hi) <= power_sum:
            break
        hi *= settings.expand_factor
    else:
        raise AllocationError(f"latency bisection: no upper bracket above {hi:.3e}")
    for _ in range(settings.bisect_iters):
        mid = 0.5 * (lo + hi)
        if total(mid) >= power_sum:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    return y, _power_needed(y, bits, gains, d, df, sigma2)


def bits_for_multiplier(nu: float, weights, caps, b_min: int, u_range: float):
    """Closed-form bit levels for a multiplier value, clipped into the caps."""
    bhat = 0.5 * np.log2(np.asarray(weights) * LN2 * u_range**2 / (2.0 * nu))
    return np.minimum(caps, np.maximum(float(b_min), bhat))


def solve_bits(weights, caps, b_min, target_pb, u_range, settings: SolverSettings = DEFAULT_SETTINGS):
    """Bisect the bit multiplier until the bit sum hits the budget.

    Returns ``(bits, nu, budget_met)``. When the latency caps make the budget
    unreachable the cap solution is returned with ``budget_met=False``; the
    caller records the deficit and lets the next latency update absorb it.
    """
    weights = np.asarray(weights, dtype=float)
    caps = np.asarray(caps, dtype=float)
    if u_range == 0.0:
        # degenerate image: quantization error is zero at any depth
        bits = np.minimum(caps, max(float(b_min), target_pb / weights.size))
        return bits, float("nan"), abs(float(bits.sum()) - target_pb) < 1e-9
    cap_top = max(float(caps.max()), float(b_min))
    lo = float(weights.min()) * LN2 * u_range**2 / (2.0 * 4.0**cap_top) / 4.0
    hi = float(weights.max()) * LN2 * u_range**2 / (2.0 * 4.0**b_min) * 4.0
    if float(bits_for_multiplier(lo, weights, caps, b_min, u_range).sum()) < target_pb - 1e-9:
        return bits_for_multiplier(lo, weights, caps, b_min, u_range), lo, False
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(settings.nu_iters):
        lmid = 0.5 * (llo + lhi)
        if float(bits_for_multiplier(math.exp(lmid), weights, caps, b_min, u_range).sum()) >= target_pb:
            llo = lmid
        else:
            lhi = lmid
    nu = math.exp(0.5 * (llo + lhi))
    return bits_for_multiplier(nu, weights, caps, b_min, u_range), nu, True


def tau_multiplier(bits, gains, y, d, df, df0, sigma2) -> float:
    """Power-constraint multiplier at an equal-latency point (diagnostic only)."""
    if y <= 0:
        return float("nan")
    bits = np.asarray(bits, dtype=float)
    terms = sigma2 * d * bits * LN2 / (df0 * np.asarray(gains) ** 2 * y**2) * np.exp2(d * bits / (y * df))
    s = float(terms.sum())
    return 1.0 / s if s > 0 else float("nan")


def integerize(bits_cont, scores, b_min: int, b_max: int, b_target: int, d: int) -> np.ndarray:
    """Round, clip, then walk single bits until the budget is met exactly.

    Rounding is half-away-from-zero. Missing bits are added in descending
    score order (ties to the lower patch index), surplus bits removed in
    ascending score order, skipping saturated or floored patches and cycling
    until the sum closes.
    """
    if b_target % d != 0:
        raise ValueError("b_target must be an integer multiple of d")
    target_pb = b_target // d
    scores = np.asarray(scores, dtype=float)
    bits = np.clip(np.floor(np.asarray(bits_cont, dtype=float) + 0.5).astype(int), b_min, b_max)
    n = bits.size
    if not b_min * n <= target_pb <= b_max * n:
        raise ValueError("bit budget cannot be met within [b_min, b_max]")
    idx = np.arange(n)
    desc = np.lexsort((idx, -scores))
    asc = np.lexsort((idx, scores))
    delta = int(bits.sum()) - target_pb
    while delta != 0:
        moved = False
        order = desc if delta < 0 else asc
        for i in order:
            if delta < 0 and bits[i] < b_max:
                bits[i] += 1
                delta += 1
                moved = True
            elif delta > 0 and bits[i] > b_min:
                bits[i] -= 1
                delta -= 1
                moved = True
            if delta == 0:
                break
        if not moved:  # unreachable given the budget check above
            raise AllocationError("integerization failed to close the bit budget")
    return bits


def power_solve_fixed_bits(bits, eq_gains, d, df, sigma2, power_sum, settings: SolverSettings = DEFAULT_SETTINGS):
    """Exact minimizer of the worst-case latency for a fixed bit vector.

    Returns ``(powers, y)``; this is the power-only stage of the
    low-complexity pipeline and the oracle used in tests.
    """
    y, powers = solve_latency(bits, eq_gains, d, df, sigma2, power_sum, settings)
    return powers, y


def exchange_polish(bits, weights, gains, d, df, b_min, b_max, u_min, u_max, power_stage, max_moves=None):
    """Greedy single-bit exchanges on an integer allocation.

    Score-ordered rounding can leave a bit on a patch where it buys little;
    each round ranks donor/receiver pairs by a marginal estimate (analytic
    quantization-error deltas plus the implicit latency derivative of the
    equal-latency point), verifies the most promising ones against the exact
    power subproblem and keeps the best strict improvement.
    ``power_stage(bits) -> (y, powers)``.
    """
    bits = np.asarray(bits, dtype=int).copy()
    weights = np.asarray(weights, dtype=float)
    gains = np.asarray(gains, dtype=float)
    g = bits.size
    if max_moves is None:
        max_moves = 2 * g if g <= 16 else 24
    exhaustive = g <= 16
    y, powers = power_stage(bits)
    eq_terms = weights * d * (u_max - u_min) ** 2 / 4.0 * 4.0 ** (-bits.astype(float))
    obj = y + float(eq_terms.sum())
    for _ in range(max_moves):
        with np.errstate(over="ignore"):
            expo = np.exp2(d * bits / (y * df)) if y > 0 else np.ones(g)
        num = gains**-2.0 * expo
        den = float(np.sum(gains**-2.0 * bits * expo))
        dy = y * num / den if den > 0 and np.all(np.isfinite(num)) else np.zeros(g)
        delta_plus = dy - 0.75 * eq_terms  # add one bit: latency up, error down
        delta_minus = -dy + 3.0 * eq_terms  # remove one bit
        donors = np.flatnonzero(bits > b_min)
        receivers = np.flatnonzero(bits < b_max)
        if donors.size == 0 or receivers.size == 0:
            break
        pairs = [(i, j) for i in donors for j in receivers if i != j]
        if not pairs:
            break
        est = np.array([delta_minus[i] + delta_plus[j] for i, j in pairs])
        order = np.argsort(est)
        tried = order if exhaustive else order[:12]
        best = None
        for idx in tried:
            i, j = pairs[idx]
            cand = bits.copy()
            cand[i] -= 1
            cand[j] += 1
            cy, cp = power_stage(cand)
            ceq = weights * d * (u_max - u_min) ** 2 / 4.0 * 4.0 ** (-cand.astype(float))
            cobj = cy + float(ceq.sum())
            if cobj < obj * (1.0 - 1e-12) and (best is None or cobj < best[0]):
                best = (cobj, cand, cy, cp, ceq)
        if best is None:
            break
        obj, bits, y, powers, eq_terms = best
    return bits, y, powers


def bcd_solve(problem: AllocProblem, scores=None, settings: SolverSettings = DEFAULT_SETTINGS) -> AllocationResult:
    """Run K block-coordinate iterations, then integerize and re-solve powers.

    ``scores`` orders the integer bit adjustment; the weights are used when
    no raw scores are supplied (the two orderings coincide because the weight
    map is strictly monotone).
    """
    g = problem.g
    gains = problem.eq_gains
    w = problem.weights
    d, df, df0, sigma2 = problem.d, problem.df, problem.df0, problem.sigma2
    power_sum = problem.power_sum
    target_pb = problem.target_pb
    if scores is None:
        scores = w

    # initialization: uniform powers; no latency iterate exists before the
    # first bit stage, so iteration 1 runs uncapped. Later iterations probe a
    # ladder of cap levels below the incumbent latency: a plain cap update
    # freezes at the first equal-latency point (the active constraints
    # reproduce the previous bits exactly), so the tradeoff between shaving
    # latency-expensive blocks and growing the quantization error has to be
    # searched explicitly. The best candidate is kept, which also makes the
    # objective trace monotone by construction.
    p_prev = np.full(g, power_sum / g)
    y_prev = None

    trace = []
    bits = np.full(g, target_pb / g)
    powers = p_prev
    y = float("nan")
    nu = float("nan")
    tau = float("nan")
    budget_met = True
    prev_obj = None
    for k in range(problem.k_iters):
        if y_prev is None:
            cap_levels = [None]
        else:
            cap_levels = [omega * y_prev for omega in CAP_LADDER]
        gamma_prev = p_prev * gains**2 / sigma2
        best = None
        for y_cap in cap_levels:
            if y_cap is None:
                caps = np.full(g, float(problem.b_max))
            else:
                caps = np.minimum(y_cap * df / d * np.log2(1.0 + gamma_prev), float(problem.b_max))
            cand_bits, cand_nu, cand_met = solve_bits(w, caps, problem.b_min, target_pb, problem.u_range, settings)
            if not cand_met and best is not None and best[3]:
                continue  # a short bit budget fakes a low latency; keep budget-met iterates
            cand_y, cand_powers = solve_latency(cand_bits, gains, d, df, sigma2, power_sum, settings)
            cand_eq = weighted_error_bound(cand_bits, w, d, problem.u_min, problem.u_max)
            cand_obj = float(cand_y + cand_eq)
            if best is None or (cand_met and not best[3]) or (cand_met == best[3] and cand_obj < best[0]):
                best = (cand_obj, cand_bits, cand_nu, cand_met, cand_y, cand_powers, cand_eq)
        if prev_obj is None or best[0] <= prev_obj:
            _, bits, nu, budget_met, y, powers, eq = best
            prev_obj = best[0]
        else:
            eq = weighted_error_bound(bits, w, d, problem.u_min, problem.u_max)
        tau = tau_multiplier(bits, gains, y, d, df, df0, sigma2)
        trace.append({"k": k + 1, "y": float(y), "e_q": float(eq), "objective": float(y + eq)})
        frozen = y_prev is not None and y == y_prev and np.array_equal(powers, p_prev)
        p_prev, y_prev = powers, y
        if frozen:
            # identical state reproduces identical candidates; replay the trace
            for kk in range(k + 1, problem.k_iters):
                trace.append({"k": kk + 1, "y": float(y), "e_q": float(eq), "objective": float(y + eq)})
            break

    bits_int = integerize(bits, scores, problem.b_min, problem.b_max, problem.b_target, d)

    def stage(b):
        return solve_latency(b, gains, d, df, sigma2, power_sum, settings)

    bits_int, y_int, p_int = exchange_polish(
        bits_int, w, gains, d, df, problem.b_min, problem.b_max, problem.u_min, problem.u_max, stage
    )
    eq_int = weighted_error_bound(bits_int, w, d, problem.u_min, problem.u_max)
    eq_cont = weighted_error_bound(bits, w, d, problem.u_min, problem.u_max)

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
        diagnostics={"bit_budget_met_cont": bool(budget_met)},
        settings=settings.to_dict(),
    )


def kkt_report(problem: AllocProblem, bits, powers, y) -> dict:
    """Stationarity diagnostics at an equal-latency point.

    Reconstructs the per-constraint multipliers from the power-constraint
    multiplier and reports how far the latency constraints are from active
    and the multiplier normalization from one.
    """
    gains = problem.eq_gains
    bits = np.asarray(bits, dtype=float)
    gamma = np.asarray(powers) * gains**2 / problem.sigma2
    rates = problem.df * np.log2(1.0 + gamma)
    lat = np.where(bits > 0, problem.d * bits / np.where(rates > 0, rates, np.nan), 0.0)
    active = lat[bits > 0]
    resid = float(np.max(np.abs(active - y)) / y) if active.size and y > 0 else 0.0
    tau = tau_multiplier(bits, gains, y, problem.d, problem.df, problem.df0, problem.sigma2)
    rho = (
        tau
        * LN2
        * problem.sigma2
        * problem.d
        * bits
        / (problem.df0 * gains**2 * y**2)
        * np.exp2(problem.d * bits / (y * problem.df))
    )
    power_residual = abs(float(np.sum(np.asarray(powers) * problem.spb)) - problem.p_tot) / problem.p_tot
    return {
        "latency_residual": resid,
        "rho": rho,
        "rho_sum": float(rho.sum()),
        "tau": float(tau),
        "power_residual": float(power_residual),
    }
