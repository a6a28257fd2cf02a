"""State discretization: simplex mesh, geometric wealth grid, interpolation.

The proportion simplex is meshed by all compositions with coordinates that
are multiples of 1/m (mesh order m), listed in ascending lexicographic order
of their integer coordinate tuples; node indices therefore give a canonical
deterministic tie-break.  Wealth, when present, lives on a strictly
increasing geometric grid and off-grid values are resolved linearly in
log-wealth (or by nearest node, depending on the interpolation mode).
Off-mesh proportions always snap to the nearest mesh node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

INTERPOLATION_MODES = ("nearest-linear", "nearest-nearest")


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def simplex_mesh(n_assets: int, order: int) -> np.ndarray:
    """All proportion vectors with coordinates k/order, lexicographic order."""
    if n_assets < 1 or order < 1:
        raise ValueError("need n_assets >= 1 and order >= 1")
    combos = np.array(list(_compositions(order, n_assets)), dtype=float)
    return combos / order


@dataclass
class StateGrid:
    """Discretized (proportion, wealth, factor) state space.

    ``wealth`` is None for the proportional-cost problem, whose value
    functions carry no wealth axis.
    """

    nodes: np.ndarray
    mesh_order: int
    n_z: int
    wealth: Optional[np.ndarray] = None
    interpolation: str = "nearest-linear"
    _keys: np.ndarray = field(init=False, repr=False)
    _perm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.interpolation not in INTERPOLATION_MODES:
            raise ValueError(f"interpolation must be one of {INTERPOLATION_MODES}")
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.wealth is not None:
            self.wealth = np.asarray(self.wealth, dtype=float)
            if self.wealth.ndim != 1 or np.any(np.diff(self.wealth) <= 0):
                raise ValueError("wealth grid must be strictly increasing")
            if self.wealth[0] <= 0:
                raise ValueError("wealth grid must be positive")
        # integer keys for O(log n) nearest-node lookup
        ints = np.rint(self.nodes * self.mesh_order).astype(np.int64)
        radix = (self.mesh_order + 1) ** np.arange(self.n_assets - 1, -1, -1, dtype=np.int64)
        keys = ints @ radix
        self._perm = np.argsort(keys)
        self._keys = keys[self._perm]

    @classmethod
    def build(cls, n_assets: int, mesh_order: int, n_z: int,
              x_min: Optional[float] = None, x_max: Optional[float] = None,
              n_x: Optional[int] = None,
              interpolation: str = "nearest-linear") -> "StateGrid":
        nodes = simplex_mesh(n_assets, mesh_order)
        wealth = None
        if x_min is not None:
            if x_max is None or n_x is None:
                raise ValueError("wealth grid needs x_min, x_max and n_x")
            if not 0 < x_min < x_max:
                raise ValueError("need 0 < x_min < x_max")
            wealth = np.geomspace(x_min, x_max, n_x)
        return cls(nodes=nodes, mesh_order=mesh_order, n_z=n_z, wealth=wealth,
                   interpolation=interpolation)

    @property
    def n_assets(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_wealth(self) -> int:
        return 0 if self.wealth is None else self.wealth.shape[0]

    @property
    def has_wealth_axis(self) -> bool:
        return self.wealth is not None

    def without_wealth(self) -> "StateGrid":
        return StateGrid(nodes=self.nodes, mesh_order=self.mesh_order,
                         n_z=self.n_z, wealth=None,
                         interpolation=self.interpolation)

    def spec_dict(self) -> dict:
        out = {
            "n_assets": self.n_assets,
            "mesh_order": self.mesh_order,
            "n_z": self.n_z,
            "interpolation": self.interpolation,
        }
        if self.wealth is not None:
            out["wealth"] = {
                "x_min": float(self.wealth[0]),
                "x_max": float(self.wealth[-1]),
                "n_x": int(self.n_wealth),
            }
        return out

    # ------------------------------------------------------------------
    # lookups
    # ------------------------------------------------------------------

    def nearest_node(self, pi) -> np.ndarray:
        """Indices of the mesh nodes nearest to proportion rows ``pi``.

        Coordinates are rounded on the 1/m lattice and the rounding surplus
        is repaid on the coordinates rounded furthest, which minimizes the
        distance among lattice points summing to m.  Ties resolve to the
        lowest coordinate index, making lookups deterministic.
        """
        pi = np.atleast_2d(np.asarray(pi, dtype=float))
        y = pi * self.mesh_order
        k = np.rint(y).astype(np.int64)
        overshoot = k.sum(axis=1) - self.mesh_order
        if np.any(overshoot != 0):
            resid = k - y
            for row in np.nonzero(overshoot)[0]:
                d = int(overshoot[row])
                if d > 0:
                    order = np.argsort(-resid[row], kind="stable")
                    k[row, order[:d]] -= 1
                else:
                    order = np.argsort(resid[row], kind="stable")
                    k[row, order[:-d]] += 1
        radix = (self.mesh_order + 1) ** np.arange(self.n_assets - 1, -1, -1,
                                                   dtype=np.int64)
        keys = k @ radix
        pos = np.searchsorted(self._keys, keys)
        return self._perm[pos]

    def node_index(self, pi) -> int:
        return int(self.nearest_node(np.asarray(pi))[0])

    def wealth_pos(self, x):
        """Lower index and interpolation weight for wealth values ``x``.

        Positions are computed linearly in log-wealth and clamped to the
        grid range; in nearest mode the weight is rounded to 0 or 1.
        """
        if self.wealth is None:
            raise ValueError("grid has no wealth axis")
        x = np.asarray(x, dtype=float)
        n_x = self.n_wealth
        if n_x == 1:
            j0 = np.zeros(x.shape, dtype=np.int64)
            return j0, np.zeros(x.shape)
        lx0 = np.log(self.wealth[0])
        dlx = (np.log(self.wealth[-1]) - lx0) / (n_x - 1)
        pos = np.clip((np.log(x) - lx0) / dlx, 0.0, n_x - 1.0)
        j0 = np.minimum(pos.astype(np.int64), n_x - 2)
        frac = pos - j0
        if self.interpolation == "nearest-nearest":
            frac = np.rint(frac)
        return j0, frac

    def nearest_wealth(self, x) -> np.ndarray:
        j0, frac = self.wealth_pos(x)
        return j0 + np.rint(frac).astype(np.int64)

    def interp(self, values: np.ndarray, node_idx, x, z):
        """Evaluate a value table at (node index, wealth, factor) points."""
        if values.ndim == 2:
            return values[node_idx, z]
        j0, frac = self.wealth_pos(x)
        lo = values[node_idx, j0, z]
        hi = values[node_idx, np.minimum(j0 + 1, self.n_wealth - 1), z]
        return (1.0 - frac) * lo + frac * hi


@dataclass
class ValueFunction:
    """Value table on a StateGrid.

    ``values`` has shape (n_nodes, n_wealth, n_z) for the fixed-cost
    variant and (n_nodes, n_z) for the proportional variant.
    """

    grid: StateGrid
    values: np.ndarray
    beta: float
    variant: str  # "fixed" | "proportional"

    def copy_with(self, values) -> "ValueFunction":
        return ValueFunction(grid=self.grid, values=values, beta=self.beta,
                             variant=self.variant)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass
class Policy:
    """Greedy rebalance rule on a StateGrid.

    ``impulse`` flags states where transacting strictly beats holding,
    ``target`` holds the node index of the rebalance target (the state's
    own node where no transaction happens).
    """

    grid: StateGrid
    impulse: np.ndarray
    target: np.ndarray
    beta: object  # float or the string "average"

    @property
    def wealth_free(self) -> bool:
        return self.impulse.ndim == 2
