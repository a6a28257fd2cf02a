"""Average-growth optimization by the vanishing-discount limit.

Discounted values blow up like 1/(1-beta) as the discount approaches one,
but their span stays bounded, so (1-beta) times the peak discounted value
converges to the optimal long-run growth rate.  This module sweeps an
ascending discount schedule, extracts the greedy policy at the largest
discount, checks the stationarity (Bellman) inequality of the resulting
(policy, relative value, growth rate) triple, and builds the wealth-gated
strategy that lifts a proportional-cost policy to the fixed-cost problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .costs import CostConstants, CostSpec
from .dp import (DpTables, _continuation_fixed, _continuation_prop,
                 build_tables, solve_discounted)
from .grid import Policy, StateGrid, ValueFunction
from .market import MarketModel


@dataclass
class VanishingDiscountReport:
    """Per-discount diagnostics of the vanishing-discount sweep.

    ``growth_rate`` is the estimate at the largest discount (the scheduled
    limit point); a two-point Richardson extrapolation in (1-beta) is
    reported alongside, not substituted.
    """

    betas: list
    peak_values: list              # sup of the proportional value per beta
    growth_estimates: list         # (1-beta) * peak value
    growth_rate: float
    growth_rate_extrapolated: float
    relative_value_range: list     # (min, max) of w = peak - value per beta
    variant_peak_values: list      # sup of the solved variant's value per beta
    policy_change_fraction: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    # in-memory extras for downstream checks (not serialized)
    policy: Optional[Policy] = None
    prop_policy: Optional[Policy] = None
    prop_value: Optional[ValueFunction] = None
    fixed_value: Optional[ValueFunction] = None
    relative_value: Optional[np.ndarray] = None

    def to_json_dict(self) -> dict:
        return {
            "betas": list(map(float, self.betas)),
            "m_beta": list(map(float, self.peak_values)),
            "lambda_estimates": list(map(float, self.growth_estimates)),
            "lambda": float(self.growth_rate),
            "lambda_extrapolated": float(self.growth_rate_extrapolated),
            "w_beta_extremes": [[float(a), float(b)]
                                for a, b in self.relative_value_range],
            "variant_sup_values": list(map(float, self.variant_peak_values)),
            "policy_change_fraction": float(self.policy_change_fraction),
            "converged": bool(self.converged),
            "diagnostics": self.diagnostics,
        }


def _policy_difference(a: Policy, b: Policy) -> float:
    changed = (a.impulse != b.impulse) | (a.target != b.target)
    return float(changed.mean())


def vanishing_discount(model: MarketModel, spec: CostSpec, grid: StateGrid,
                       betas: Sequence[float], tol: float = 1e-6,
                       max_iter: int = 5_000_000):
    """Sweep the discount schedule and extract the average-growth policy.

    For a fixed-cost spec both discounted problems are solved per discount:
    the proportional one supplies the peak value, the fixed-cost one the
    relative value and the returned policy.  Returns (report, policy).
    """
    betas = [float(b) for b in betas]
    if not betas or any(not 0 < b < 1 for b in betas):
        raise ValueError("betas must lie in (0, 1)")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly ascending")

    has_fixed = spec.fixed > 0.0
    prop_spec = spec.without_fixed()
    prop_grid = grid.without_wealth()
    prop_tables = build_tables(model, prop_spec, prop_grid)
    fixed_tables = build_tables(model, spec, grid) if has_fixed else None

    peak, estimates, w_range, variant_peak = [], [], [], []
    iters = {}
    last = {}
    prev_policy = None
    change_fraction = float("nan")
    for beta in betas:
        v_prop, pol_prop, rep_p = solve_discounted(
            model, prop_spec, prop_grid, beta, tol=tol, max_iter=max_iter,
            tables=prop_tables)
        m_beta = float(v_prop.values.max())
        if has_fixed:
            v_fix, pol_fix, rep_f = solve_discounted(
                model, spec, grid, beta, tol=tol, max_iter=max_iter,
                tables=fixed_tables)
            w = m_beta - v_fix.values
            policy = pol_fix
            variant_sup = float(v_fix.values.max())
            iters[beta] = (rep_p.iterations, rep_f.iterations)
        else:
            v_fix = None
            w = m_beta - v_prop.values
            policy = pol_prop
            variant_sup = m_beta
            iters[beta] = (rep_p.iterations,)
        peak.append(m_beta)
        estimates.append((1.0 - beta) * m_beta)
        w_range.append((float(w.min()), float(w.max())))
        variant_peak.append(variant_sup)
        if prev_policy is not None:
            change_fraction = _policy_difference(prev_policy, policy)
        prev_policy = policy
        last = {"v_prop": v_prop, "pol_prop": pol_prop, "v_fix": v_fix,
                "policy": policy, "w": w}

    if len(betas) >= 2:
        b1, b2 = betas[-2], betas[-1]
        l1, l2 = estimates[-2], estimates[-1]
        extrap = (l2 * (1 - b1) - l1 * (1 - b2)) / ((1 - b1) - (1 - b2))
    else:
        extrap = estimates[-1]

    # the policy extracted at the largest discount is the average-growth
    # policy; tag it as such (the report keeps the discount diagnostics)
    final_policy = replace(last["policy"], beta="average")

    report = VanishingDiscountReport(
        betas=betas,
        peak_values=peak,
        growth_estimates=estimates,
        growth_rate=estimates[-1],
        growth_rate_extrapolated=float(extrap),
        relative_value_range=w_range,
        variant_peak_values=variant_peak,
        policy_change_fraction=change_fraction,
        converged=True,
        diagnostics={
            "iterations": {str(b): v for b, v in iters.items()},
            "last_step": abs(estimates[-1] - estimates[-2]) if len(betas) >= 2 else 0.0,
            "tol": tol,
        },
        policy=final_policy,
        prop_policy=last["pol_prop"],
        prop_value=last["v_prop"],
        fixed_value=last["v_fix"],
        relative_value=last["w"],
    )
    return report, final_policy


@dataclass
class ResidualReport:
    """Pointwise slack of the average-growth stationarity inequality."""

    min_slack: float
    mean_slack: float
    slack: np.ndarray

    def ok(self, grid_tol: float = 1e-6) -> bool:
        return self.min_slack >= -grid_tol


def bellman_residual(policy: Policy, w: np.ndarray, growth_rate: float,
                     model: MarketModel, spec: CostSpec,
                     tables: Optional[DpTables] = None) -> ResidualReport:
    """Slack of reward(action) + w - E_q w - growth_rate at every state.

    ``w`` is the nonnegative relative value (peak minus value).  The slack
    realizes the limit stationarity inequality; plugging in the greedy
    solution of a discounted problem makes it exactly minus (1-beta) times
    the expected relative value, so it approaches zero from below as the
    discount schedule tightens and acceptance thresholds should budget for
    (1-beta) times the largest relative value.
    """
    grid = policy.grid
    if tables is None:
        tables = build_tables(model, spec, grid)
    w = np.asarray(w, dtype=float)
    if w.shape != policy.impulse.shape:
        raise ValueError("relative value and policy shapes disagree")

    if policy.wealth_free:
        w_cont = _continuation_prop(w, tables, 1.0) - tables.h_tab
        n_p, n_z = w.shape
        p_idx, z_idx = np.ogrid[:n_p, :n_z]
        tgt = policy.target
        hold_slack = tables.h_tab + w - w_cont - growth_rate
        trans_eta = tables.h_tab[tgt, z_idx] + tables.ln_e_prop[p_idx, tgt]
        trans_slack = trans_eta + w - w_cont[tgt, z_idx] - growth_rate
    else:
        w_cont = _continuation_fixed(w, tables, 1.0) - tables.h_tab[:, None, :]
        n_p, n_x, n_z = w.shape
        p_idx, j_idx, z_idx = np.ogrid[:n_p, :n_x, :n_z]
        tgt = policy.target
        hold_slack = tables.h_tab[:, None, :] + w - w_cont - growth_rate
        ln_e = tables.ln_e_fac[p_idx, tgt, j_idx]
        j0 = tables.imp_j0[p_idx, tgt, j_idx]
        frac = tables.imp_frac[p_idx, tgt, j_idx]
        j1 = np.minimum(j0 + 1, n_x - 1)
        ew = (1.0 - frac) * w_cont[tgt, j0, z_idx] + frac * w_cont[tgt, j1, z_idx]
        trans_slack = tables.h_tab[tgt, z_idx] + ln_e + w - ew - growth_rate

    slack = np.where(policy.impulse, trans_slack, hold_slack)
    return ResidualReport(min_slack=float(slack.min()),
                          mean_slack=float(slack.mean()), slack=slack)


@dataclass
class CrossCheckReport:
    """Agreement of fixed-cost and proportional-cost growth rates."""

    growth_rate_fixed: float
    growth_rate_prop: float
    difference: float
    cross_tol: float
    fixed_report: VanishingDiscountReport
    prop_report: VanishingDiscountReport

    @property
    def ok(self) -> bool:
        return abs(self.difference) <= self.cross_tol


def cross_check_costs(model: MarketModel, spec: CostSpec, grid: StateGrid,
                      betas: Sequence[float], tol: float = 1e-6,
                      cross_tol: float = 5e-3) -> CrossCheckReport:
    """Compare the fixed-cost growth estimate against the proportional one.

    The fixed-cost estimate is (1-beta) times the peak of the fixed-cost
    value at the largest discount; it sits below the proportional estimate
    by the fixed-charge drag at the top of the wealth grid, so the gap
    shrinks as the wealth grid is extended upward.
    """
    rep_fixed, _ = vanishing_discount(model, spec, grid, betas, tol=tol)
    rep_prop, _ = vanishing_discount(model, spec.without_fixed(), grid, betas,
                                     tol=tol)
    beta_last = betas[-1]
    lam_fixed = (1.0 - beta_last) * rep_fixed.variant_peak_values[-1]
    lam_prop = rep_prop.growth_rate
    return CrossCheckReport(
        growth_rate_fixed=float(lam_fixed),
        growth_rate_prop=float(lam_prop),
        difference=float(lam_fixed - lam_prop),
        cross_tol=cross_tol,
        fixed_report=rep_fixed,
        prop_report=rep_prop,
    )


@dataclass(frozen=True)
class MimickingPolicy:
    """Wealth-gated lift of a proportional-cost policy to fixed costs.

    Below ``wealth_threshold`` no transactions happen; once wealth has
    dipped below the threshold, trading resumes only after it recovers past
    ``resync_wealth``, at which point the portfolio re-syncs to the base
    policy's target.  Above the threshold (and not recovering) the base
    policy is followed unchanged.
    """

    base: Policy
    wealth_threshold: float
    resync_wealth: float


def build_mimicking(base: Policy, constants: CostConstants) -> MimickingPolicy:
    if not base.wealth_free:
        raise ValueError("the base policy must not depend on wealth "
                         "(solve the proportional problem to obtain one)")
    return MimickingPolicy(
        base=base,
        wealth_threshold=constants.wealth_threshold,
        resync_wealth=constants.resync_wealth,
    )
