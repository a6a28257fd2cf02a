"""Discounted dynamic programming with an impulse (rebalance) branch.

The Bellman operator at a state (proportions p0, wealth x, factor z) takes
the better of two branches:

  hold:        h(p0, z) + beta * E v(p0 after market step, x grown, z')
  rebalance:   max over targets p' != p0 of
               ln e(p0, p', x) + h(p', z) + beta * E v(p' after step, ...)

Expectations are exact finite sums over (next factor, shock); off-grid
proportions snap to the nearest mesh node and off-grid wealth interpolates
linearly in log-wealth, with dynamics clamped to the wealth grid range.
Value iteration runs from the pure-hold value and stops when the sup-norm
step is below tol*(1-beta)/beta, which bounds the distance to the grid
fixed point by tol.

For zero fixed cost the value carries no wealth axis and the same sweeps
run on the collapsed grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import CostSpec, solve_e_batch
from .grid import Policy, StateGrid, ValueFunction
from .market import MarketModel, mixing_step

NEG = -1e18  # sentinel for unaffordable rebalances; never interpolated
TIE_EPS = 1e-10  # rebalance must beat holding by more than this


@dataclass
class DpTables:
    """Precomputed transition structure shared by all sweeps on one grid."""

    grid: StateGrid
    w_zs: np.ndarray        # (n_z, n_z', n_s) transition x shock weights
    dia_idx: np.ndarray     # (n_p, n_z', n_s) node after one market step
    step_lr: np.ndarray     # (n_p, n_z', n_s) log growth of wealth
    h_tab: np.ndarray       # (n_p, n_z) expected one-step log return
    e_prop: np.ndarray      # (n_p, n_p) proportional surviving fraction
    ln_e_prop: np.ndarray
    # fixed-cost extras (None for proportional grids)
    e_fac: Optional[np.ndarray] = None       # (n_p, n_p, n_x)
    ln_e_fac: Optional[np.ndarray] = None
    imp_j0: Optional[np.ndarray] = None      # wealth cell after paying costs
    imp_frac: Optional[np.ndarray] = None
    stp_j0: Optional[np.ndarray] = None      # wealth cell after market step
    stp_j1: Optional[np.ndarray] = None
    stp_frac: Optional[np.ndarray] = None


def build_tables(model: MarketModel, spec: CostSpec, grid: StateGrid) -> DpTables:
    if grid.n_assets != model.n_assets or grid.n_assets != spec.n_assets:
        raise ValueError("model, cost spec and grid disagree on asset count")
    if grid.n_z != model.n_factors:
        raise ValueError("grid factor count does not match the model")
    nodes = grid.nodes
    n_p = grid.n_nodes
    port = np.einsum("pd,qsd->pqs", nodes, model.returns)
    step_lr = np.log(port)
    dia = nodes[:, None, None, :] * model.returns[None, :, :, :] / port[..., None]
    dia_idx = grid.nearest_node(dia.reshape(-1, grid.n_assets)).reshape(port.shape)
    w_zs = model.transition[:, :, None] * model.shock_probs[None, None, :]
    h_tab = np.einsum("pqs,zqs->pz", step_lr, w_zs)

    prev = np.repeat(nodes, n_p, axis=0)
    new = np.tile(nodes, (n_p, 1))
    e_prop = solve_e_batch(spec.without_fixed(), prev, new,
                           np.ones(n_p * n_p)).reshape(n_p, n_p)
    ln_e_prop = np.log(e_prop)

    tables = DpTables(grid=grid, w_zs=w_zs, dia_idx=dia_idx, step_lr=step_lr,
                      h_tab=h_tab, e_prop=e_prop, ln_e_prop=ln_e_prop)
    if not grid.has_wealth_axis:
        return tables

    n_x = grid.n_wealth
    wealth = grid.wealth
    prev3 = np.repeat(prev, n_x, axis=0)
    new3 = np.repeat(new, n_x, axis=0)
    x3 = np.tile(wealth, n_p * n_p)
    e_fac = solve_e_batch(spec, prev3, new3, x3).reshape(n_p, n_p, n_x)
    ln_e_fac = np.where(e_fac > 0.0, np.log(np.where(e_fac > 0.0, e_fac, 1.0)), NEG)
    x_after = np.where(e_fac > 0.0, wealth[None, None, :] * e_fac, wealth[0])
    imp_j0, imp_frac = grid.wealth_pos(x_after)

    x_step = wealth[None, :, None, None] * np.exp(step_lr[:, None, :, :])
    stp_j0, stp_frac = grid.wealth_pos(x_step)
    stp_j1 = np.minimum(stp_j0 + 1, n_x - 1)

    tables.e_fac = e_fac
    tables.ln_e_fac = ln_e_fac
    tables.imp_j0 = imp_j0
    tables.imp_frac = imp_frac
    tables.stp_j0 = stp_j0
    tables.stp_j1 = stp_j1
    tables.stp_frac = stp_frac
    return tables


# ----------------------------------------------------------------------
# sweep kernels
# ----------------------------------------------------------------------

def _continuation_prop(values, t: DpTables, beta: float):
    # values: (n_p, n_z) -> hold-branch value h + beta * E v
    zb = np.arange(t.w_zs.shape[0])[None, :, None]
    gathered = values[t.dia_idx, zb]
    ev = np.einsum("pqs,zqs->pz", gathered, t.w_zs)
    return t.h_tab + beta * ev


def _transaction_prop(cont, t: DpTables):
    # cont: (n_p, n_z); returns best rebalance value and target per state
    n_p = cont.shape[0]
    vals = t.ln_e_prop[:, :, None] + cont[None, :, :]
    idx = np.arange(n_p)
    vals[idx, idx, :] = NEG
    return vals.max(axis=1), vals.argmax(axis=1)


def _continuation_fixed(values, t: DpTables, beta: float):
    # values: (n_p, n_x, n_z)
    n_z = t.w_zs.shape[0]
    dia = t.dia_idx[:, None, :, :]
    zb = np.arange(n_z)[None, None, :, None]
    v_lo = values[dia, t.stp_j0, zb]
    v_hi = values[dia, t.stp_j1, zb]
    vw = (1.0 - t.stp_frac) * v_lo + t.stp_frac * v_hi
    ev = np.einsum("pjqs,zqs->pjz", vw, t.w_zs)
    return t.h_tab[:, None, :] + beta * ev


def _transaction_fixed(cont, t: DpTables):
    # cont: (n_p, n_x, n_z)
    n_p, n_x, n_z = cont.shape
    tgt = np.arange(n_p)[None, :, None]
    j1 = np.minimum(t.imp_j0 + 1, n_x - 1)
    g_lo = cont[tgt, t.imp_j0]
    g_hi = cont[tgt, j1]
    gw = (1.0 - t.imp_frac[..., None]) * g_lo + t.imp_frac[..., None] * g_hi
    vals = t.ln_e_fac[..., None] + gw
    idx = np.arange(n_p)
    vals[idx, idx, :, :] = NEG
    return vals.max(axis=1), vals.argmax(axis=1)


def _branches(values, t: DpTables, beta: float, variant: str):
    if variant == "proportional":
        cont = _continuation_prop(values, t, beta)
        trans, argmax = _transaction_prop(cont, t)
    else:
        cont = _continuation_fixed(values, t, beta)
        trans, argmax = _transaction_fixed(cont, t)
    return cont, trans, argmax


def bellman_step(v: ValueFunction, model: MarketModel, spec: CostSpec,
                 tables: Optional[DpTables] = None) -> ValueFunction:
    """One application of the two-branch Bellman operator."""
    if tables is None:
        tables = build_tables(model, spec, v.grid)
    cont, trans, _ = _branches(v.values, tables, v.beta, v.variant)
    return v.copy_with(np.maximum(cont, trans))


def impulse_operator(v: ValueFunction, model: MarketModel, spec: CostSpec,
                     state):
    """Best single rebalance value at a grid state, with its target node.

    Unaffordable targets are excluded; when every target is unaffordable
    the value is -inf and the target None.  Ties resolve to the lowest node
    index (lexicographic order of the mesh).
    """
    grid = v.grid
    nodes = grid.nodes
    n_p = grid.n_nodes
    if v.variant == "fixed":
        p0, j, z = state
        x = grid.wealth[j]
    else:
        p0, z = state
        x = 1.0
    e = solve_e_batch(spec, np.repeat(nodes[p0][None, :], n_p, axis=0),
                      nodes, np.full(n_p, x))
    feasible = e > 0.0
    if not feasible.any():
        return float("-inf"), None
    vals = np.full(n_p, NEG)
    if v.variant == "fixed":
        cont = grid.interp(v.values, np.arange(n_p)[feasible],
                           x * e[feasible], z)
    else:
        cont = v.values[np.arange(n_p)[feasible], z]
    vals[feasible] = np.log(e[feasible]) + cont
    best = int(vals.argmax())
    return float(vals[best]), best


@dataclass
class IterationReport:
    beta: float
    tol: float
    variant: str
    init_iterations: int
    iterations: int
    final_diff: float
    error_bound: float
    h_inf: float


def _iterate(update, v0, stop_tol, max_iter, what):
    v = v0
    for k in range(1, max_iter + 1):
        v_new = update(v)
        diff = float(np.abs(v_new - v).max())
        v = v_new
        if diff <= stop_tol:
            return v, k, diff
    raise RuntimeError(
        f"{what} did not reach step tolerance {stop_tol:.3e} within "
        f"{max_iter} iterations (last step {diff:.3e})"
    )


def solve_discounted(model: MarketModel, spec: CostSpec, grid: StateGrid,
                     beta: float, tol: float = 1e-6,
                     max_iter: int = 5_000_000,
                     tables: Optional[DpTables] = None,
                     tie_eps: float = TIE_EPS):
    """Value iteration to the discounted fixed point, with greedy policy.

    Returns (ValueFunction, Policy, IterationReport).  The value variant is
    "fixed" when the spec carries a fixed cost (the grid must then have a
    wealth axis) and "proportional" otherwise.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if spec.fixed > 0.0:
        if not grid.has_wealth_axis:
            raise ValueError("fixed-cost problems need a wealth axis on the grid")
        variant = "fixed"
        shape = (grid.n_nodes, grid.n_wealth, grid.n_z)
    else:
        variant = "proportional"
        if grid.has_wealth_axis:
            grid = grid.without_wealth()
        shape = (grid.n_nodes, grid.n_z)
    if tables is None or tables.grid is not grid:
        tables = build_tables(model, spec, grid)
    stop_tol = tol * (1.0 - beta) / beta

    if variant == "proportional":
        hold = lambda v: _continuation_prop(v, tables, beta)
    else:
        hold = lambda v: _continuation_fixed(v, tables, beta)
    v_init, k_init, _ = _iterate(hold, np.zeros(shape), stop_tol, max_iter,
                                 "hold-only warm start")

    def update(v):
        cont, trans, _ = _branches(v, tables, beta, variant)
        return np.maximum(cont, trans)

    values, k_main, diff = _iterate(update, v_init, stop_tol, max_iter,
                                    "value iteration")

    cont, trans, argmax = _branches(values, tables, beta, variant)
    impulse = trans > cont + tie_eps
    own = np.arange(grid.n_nodes).reshape((-1,) + (1,) * (values.ndim - 1))
    target = np.where(impulse, argmax, own)
    vf = ValueFunction(grid=grid, values=values, beta=beta, variant=variant)
    pol = Policy(grid=grid, impulse=impulse, target=target, beta=beta)
    report = IterationReport(
        beta=beta, tol=tol, variant=variant, init_iterations=k_init,
        iterations=k_main, final_diff=diff,
        error_bound=diff * beta / (1.0 - beta),
        h_inf=float(np.abs(tables.h_tab).max()),
    )
    return vf, pol, report


def span_seminorm(v: ValueFunction) -> float:
    """sup - inf of a proportional-variant value function."""
    if v.variant != "proportional":
        raise ValueError("span is tracked for the proportional variant only")
    return float(v.values.max() - v.values.min())


def span_bound(model: MarketModel, spec: CostSpec, grid: StateGrid,
               n_max: int = 64) -> float:
    """Discount-independent bound on the span of the proportional value.

    n steps of mixing cost at most n spans of h plus n+2 worst-case
    rebalance drags, after which the factor chain has coupled up to kappa;
    solving the resulting recursion bounds the span by the returned value
    for every discount.
    """
    n, kappa = mixing_step(model, n_max=n_max)
    if n is None:
        raise RuntimeError("factor chain does not mix; span bound undefined")
    tables = build_tables(model, spec.without_fixed(), grid.without_wealth())
    h_sp = float(tables.h_tab.max() - tables.h_tab.min())
    ln_e_min = float(tables.ln_e_prop.min())
    return (n * h_sp - (n + 2) * ln_e_min) / (1.0 - kappa)


@dataclass
class GapReport:
    """Comparison of proportional and fixed-cost values on shared axes."""

    nonnegative: bool
    monotone_in_wealth: bool
    min_gap: float
    max_gap_per_wealth: np.ndarray

    @property
    def ok(self) -> bool:
        return self.nonnegative and self.monotone_in_wealth


def value_gap_check(v_fixed: ValueFunction, v_prop: ValueFunction,
                    slack: float = 1e-6) -> GapReport:
    """Check prop value >= fixed value and that the gap shrinks with wealth.

    ``slack`` absorbs the value-iteration tolerances of the two solves.
    """
    if v_fixed.variant != "fixed" or v_prop.variant != "proportional":
        raise ValueError("expected a fixed-cost and a proportional value function")
    gap = v_prop.values[:, None, :] - v_fixed.values  # (n_p, n_x, n_z)
    worse_with_wealth = np.diff(gap, axis=1).max() if gap.shape[1] > 1 else 0.0
    return GapReport(
        nonnegative=bool(gap.min() >= -slack),
        monotone_in_wealth=bool(worse_with_wealth <= slack),
        min_gap=float(gap.min()),
        max_gap_per_wealth=gap.max(axis=(0, 2)),
    )
