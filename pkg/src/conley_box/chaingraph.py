"""Chain graph over boxes for a fixed noise realization.

An edge ``b -> b'`` certifies a one-link chain step: some sample point of
``b``, pulled back ``t`` steps along the shifted path (``t`` in
``[T, t_max]``), lands within the state-dependent tolerance of the closed
box ``b'``.  The tolerance is evaluated at the image point (that asymmetry
is deliberate and load-bearing), plus a configurable geometric padding so
the combinatorial graph over-approximates true chains.  Cycles in the
graph realize chain recurrence; reachability realizes the candidate
pre-attractor family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import backend
from .errors import ConfigError, WindowExhaustedError
from .grid import EXTERIOR, BoxGrid, BoxId, BoxSet
from .rds import OmegaPath, RandomMapSystem, SamplingSpec, enclose_points, pullback_points


@dataclass(frozen=True)
class EpsilonField:
    """State- and noise-dependent chain tolerance, strictly positive.

    Forms: ``constant(c)``; ``radial(a + b * |x|)``; ``tabulated`` (one
    value per box, multilinear interpolation between box centers, clamped
    at the window edge).  An optional per-symbol multiplier keyed by the
    symbol at slot 0 gives measurable noise dependence, and ``cap`` is an
    optional upper clamp.
    """

    form: str
    constant: float | None = None
    radial_a: float | None = None
    radial_b: float | None = None
    table: tuple[float, ...] | None = None
    symbol_multipliers: Mapping[str, float] | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.form == "constant":
            if self.constant is None or self.constant <= 0:
                raise ConfigError("constant epsilon must be positive")
        elif self.form == "radial":
            if self.radial_a is None or self.radial_b is None:
                raise ConfigError("radial epsilon needs coefficients a and b")
            if self.radial_a <= 0 or self.radial_b < 0:
                raise ConfigError("radial epsilon needs a > 0 and b >= 0")
        elif self.form == "tabulated":
            if not self.table or any(v <= 0 for v in self.table):
                raise ConfigError("tabulated epsilon needs positive per-box values")
        else:
            raise ConfigError(f"unknown epsilon form {self.form!r}")
        if self.cap is not None and self.cap <= 0:
            raise ConfigError("cap must be positive")
        if self.symbol_multipliers is not None:
            if any(m <= 0 for m in self.symbol_multipliers.values()):
                raise ConfigError("symbol multipliers must be positive")

    def evaluate(self, points: np.ndarray, omega: OmegaPath,
                 grid: BoxGrid | None = None) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.form == "constant":
            vals = np.full(pts.shape[0], float(self.constant))
        elif self.form == "radial":
            vals = self.radial_a + self.radial_b * np.sqrt(np.sum(pts**2, axis=1))
        else:
            if grid is None:
                raise ConfigError("tabulated epsilon needs the grid")
            vals = self._interpolate(pts, grid)
        if self.symbol_multipliers is not None:
            sym = omega.symbol_at(0)
            try:
                vals = vals * float(self.symbol_multipliers[sym])
            except KeyError:
                raise ConfigError(f"no epsilon multiplier for symbol {sym!r}")
        if self.cap is not None:
            vals = np.minimum(vals, self.cap)
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ConfigError("epsilon evaluated nonpositive or nonfinite")
        return vals

    def _interpolate(self, pts: np.ndarray, grid: BoxGrid) -> np.ndarray:
        table = np.asarray(self.table, dtype=float)
        if table.shape != (grid.n_boxes,):
            raise ConfigError("tabulated epsilon needs one value per box")
        values = table.reshape(tuple(grid.resolution))
        # Coordinates in box-center lattice units, clamped (constant
        # extension beyond the outermost centers).
        u = (pts - grid.lo) / grid.width - 0.5
        u = np.clip(u, 0.0, grid.resolution - 1.0)
        base = np.floor(u).astype(np.int64)
        base = np.minimum(base, np.maximum(grid.resolution - 2, 0))
        frac = u - base
        out = np.zeros(pts.shape[0])
        d = grid.dimension
        for corner in range(2**d):
            pick = np.array([(corner >> k) & 1 for k in range(d)], dtype=np.int64)
            idx = np.minimum(base + pick, grid.resolution - 1)
            w = np.prod(np.where(pick, frac, 1.0 - frac), axis=1)
            out += w * values[tuple(idx[:, k] for k in range(d))]
        return out

    def describe(self) -> dict:
        out = {"form": self.form}
        if self.form == "constant":
            out["constant"] = self.constant
        elif self.form == "radial":
            out["a"], out["b"] = self.radial_a, self.radial_b
        else:
            out["table_len"] = len(self.table)
        if self.symbol_multipliers:
            out["symbol_multipliers"] = dict(self.symbol_multipliers)
        if self.cap is not None:
            out["cap"] = self.cap
        return out


@dataclass(frozen=True)
class ChainParams:
    """Time parameters of the chain relation and its finite truncations.

    ``T`` is the minimum chain step time, ``t_max`` the truncation of the
    unbounded step-time range, ``tau`` the pre-attractor lag and
    ``horizon`` the master time bound (basin search depth, attractor
    iteration budget).  ``pad`` controls the geometric padding added to
    the tolerance when testing box proximity: ``"half_diam"`` (half the
    box diameter, the conservative outer-approximation default),
    ``"none"``, or an explicit nonnegative float.
    """

    T: int = 1
    t_max: int = 1
    tau: int = 1
    horizon: int = 1
    pad: str | float = "half_diam"

    def __post_init__(self):
        if not 1 <= self.T <= self.t_max <= self.horizon:
            raise ConfigError("need 1 <= T <= t_max <= horizon")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if isinstance(self.pad, str):
            if self.pad not in ("half_diam", "none"):
                raise ConfigError("pad must be 'half_diam', 'none' or a float")
        elif self.pad < 0:
            raise ConfigError("numeric pad must be nonnegative")

    def pad_value(self, grid: BoxGrid) -> float:
        if self.pad == "half_diam":
            return grid.diameter / 2.0
        if self.pad == "none":
            return 0.0
        return float(self.pad)

    def describe(self) -> dict:
        return {"T": self.T, "t_max": self.t_max, "tau": self.tau,
                "horizon": self.horizon, "pad": self.pad}


class ChainGraph:
    """Directed graph over interior boxes plus the exterior node (CSR)."""

    def __init__(self, grid: BoxGrid, indptr: np.ndarray, indices: np.ndarray,
                 provenance: dict):
        self.grid = grid
        self.indptr = indptr
        self.indices = indices
        self.provenance = provenance
        self._scc: SCCResult | None = None
        self._succ_masks: list[int] | None = None

    @property
    def n_nodes(self) -> int:
        return self.grid.n_boxes + 1

    @property
    def exterior_node(self) -> int:
        return self.grid.n_boxes

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    def successors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def has_edge(self, src: int, dst: int) -> bool:
        row = self.successors(src)
        return bool(np.any(row == dst))

    def node_of(self, box: BoxId) -> int:
        if box is EXTERIOR:
            return self.exterior_node
        return self.grid.flat_index(box)

    def successor_masks(self) -> list[int]:
        """Per-node successor bitmasks over node ids (exterior included)."""
        if self._succ_masks is None:
            masks = []
            for v in range(self.n_nodes):
                m = 0
                for w in self.successors(v):
                    m |= 1 << int(w)
                masks.append(m)
            self._succ_masks = masks
        return self._succ_masks

    def edges(self):
        for v in range(self.n_nodes):
            for w in self.successors(v):
                yield v, int(w)

    def write_csv(self, path) -> None:
        """Edge list as ``src_index,dst_index`` with a JSON provenance header."""
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.provenance, sort_keys=True) + "\n")
            fh.write("src_index,dst_index\n")
            for v, w in self.edges():
                fh.write(f"{v},{w}\n")


def build_chain_graph(system: RandomMapSystem, grid: BoxGrid, eps: EpsilonField,
                      params: ChainParams, omega: OmegaPath,
                      sampling: SamplingSpec | None = None) -> ChainGraph:
    """Assemble the chain relation for one noise window.

    Edge rule: ``b -> b'`` iff for some ``t`` in ``[T, t_max]`` and some
    sample point ``p`` of ``b``, the pullback image ``q`` satisfies
    ``dist(q, closed b') < eps(q, omega) + pad``.  Image points leaving
    the window add an edge to the absorbing exterior node.
    """
    sampling = sampling or SamplingSpec()
    if params.horizon > omega.window_radius:
        raise WindowExhaustedError(
            f"horizon {params.horizon} exceeds window radius {omega.window_radius}"
        )
    pad = params.pad_value(grid)
    n_boxes = grid.n_boxes
    succ: list[set[int]] = [set() for _ in range(n_boxes + 1)]
    ext = n_boxes
    succ[ext].add(ext)

    for t in range(params.T, params.t_max + 1):
        pts = sampling.points_for_all(grid, t)
        n_samples = pts.shape[1]
        flat_pts = pts.reshape(-1, grid.dimension)
        img = pullback_points(system, t, omega, flat_pts)
        radii = eps.evaluate(img, omega, grid) + pad
        targets, starts, outside = enclose_points(grid, img, radii, strict=True)
        for i in range(flat_pts.shape[0]):
            src = i // n_samples
            row = targets[starts[i]:starts[i + 1]]
            if row.size:
                succ[src].update(int(x) for x in row)
            if outside[i]:
                succ[src].add(ext)

    indptr = np.zeros(n_boxes + 2, dtype=np.int64)
    for v in range(n_boxes + 1):
        indptr[v + 1] = indptr[v] + len(succ[v])
    indices = np.empty(int(indptr[-1]), dtype=np.int64)
    for v in range(n_boxes + 1):
        indices[indptr[v]:indptr[v + 1]] = sorted(succ[v])

    provenance = {
        "system": system.name,
        "grid": {"lo": grid.lo.tolist(), "hi": grid.hi.tolist(),
                 "resolution": grid.resolution.tolist()},
        "epsilon": eps.describe(),
        "params": params.describe(),
        "omega": omega.digest(),
        "sampling": {"interior": sampling.n_interior(grid.dimension),
                     "inset": sampling.inset, "seed": sampling.seed},
        "backend": backend.backend_name(),
    }
    return ChainGraph(grid, indptr, indices, provenance)


@dataclass
class SCCResult:
    """Strongly connected components plus their acyclic condensation."""

    labels: np.ndarray
    n_components: int
    cyclic: np.ndarray
    comp_members: list[np.ndarray]
    comp_succs: list[np.ndarray]

    def component_of(self, node: int) -> int:
        return int(self.labels[node])


def scc(graph: ChainGraph) -> SCCResult:
    """SCC partition; labels are reverse-topological on the condensation."""
    if graph._scc is not None:
        return graph._scc
    labels, n_comp = backend.tarjan_scc(graph.indptr, graph.indices, graph.n_nodes)
    labels = np.asarray(labels, dtype=np.int64)
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for v in range(graph.n_nodes):
        members[labels[v]].append(v)
    cyclic = np.zeros(n_comp, dtype=bool)
    comp_succs: list[set[int]] = [set() for _ in range(n_comp)]
    for v in range(graph.n_nodes):
        cv = labels[v]
        for w in graph.successors(v):
            cw = labels[int(w)]
            if cw == cv:
                cyclic[cv] = True  # size >= 2 or explicit self-loop
            else:
                comp_succs[cv].add(int(cw))
    result = SCCResult(
        labels=labels,
        n_components=n_comp,
        cyclic=cyclic,
        comp_members=[np.asarray(m, dtype=np.int64) for m in members],
        comp_succs=[np.asarray(sorted(s), dtype=np.int64) for s in comp_succs],
    )
    graph._scc = result
    return result


def chain_recurrent_set(graph: ChainGraph) -> BoxSet:
    """Boxes lying on some chain-graph cycle; the exterior is never reported."""
    comp = scc(graph)
    mask = 0
    for c in range(comp.n_components):
        if comp.cyclic[c]:
            for v in comp.comp_members[c]:
                if v != graph.exterior_node:
                    mask |= 1 << int(v)
    return BoxSet(graph.grid, mask, False)


def _component_reach_masks(graph: ChainGraph) -> tuple[SCCResult, list[int], list[int]]:
    """Per-component member masks and strict forward-reach masks (node bits)."""
    comp = scc(graph)
    comp_mask = [0] * comp.n_components
    for c in range(comp.n_components):
        for v in comp.comp_members[c]:
            comp_mask[c] |= 1 << int(v)
    reach = [0] * comp.n_components
    # Tarjan labels successors first, so ascending label order is safe.
    for c in range(comp.n_components):
        acc = 0
        for c2 in comp.comp_succs[c]:
            acc |= comp_mask[c2] | reach[c2]
        reach[c] = acc
    return comp, comp_mask, reach


def forward_reachable(graph: ChainGraph, box: BoxId) -> BoxSet:
    """Nodes reachable from ``box`` by at least one edge.

    The source is included exactly when it lies on a cycle through itself,
    so this is the least fixed point of the one-step successor map seeded
    at the box.
    """
    node = graph.node_of(box)
    comp, comp_mask, reach = _component_reach_masks(graph)
    c = comp.component_of(node)
    m = reach[c]
    if comp.cyclic[c]:
        m |= comp_mask[c]
    return _node_mask_to_boxset(graph, m)


def all_forward_reachable(graph: ChainGraph) -> list[int]:
    """Forward-reach node masks for every node (same convention as above)."""
    comp, comp_mask, reach = _component_reach_masks(graph)
    out = []
    for v in range(graph.n_nodes):
        c = comp.component_of(v)
        m = reach[c]
        if comp.cyclic[c]:
            m |= comp_mask[c]
        out.append(m)
    return out


def _node_mask_to_boxset(graph: ChainGraph, node_mask: int) -> BoxSet:
    ext_bit = 1 << graph.exterior_node
    interior = node_mask & (ext_bit - 1)
    return BoxSet(graph.grid, interior, bool(node_mask & ext_bit))
