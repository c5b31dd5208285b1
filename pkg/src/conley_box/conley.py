"""Pre-attractors, attractors, basins and the decomposition verifier.

All images here are outer box approximations of pullback images along a
fixed noise window.  Composite images are assembled from one-step box
images (one per driving symbol), which keeps every truncation monotone:
a set closed under each one-step image is closed under every composite,
so candidate pre-attractors harvested from chain-graph reachability pass
the containment test exactly, mirroring the role the endpoint sets play
in the decomposition theorem's proof.  Basins, by contrast, use direct
multi-step images of each source box (forward time), which keeps them
tight.

The decomposition verifier reports the residual between the complement
of the chain recurrent set and the union of basin-minus-attractor
differences, and checks the two containments that the theory makes
exact: chain recurrent boxes inside a pre-attractor (or its basin) must
end up in the attractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .chaingraph import (ChainGraph, ChainParams, EpsilonField, all_forward_reachable,
                         build_chain_graph, chain_recurrent_set)
from .errors import ConfigError, WindowExhaustedError
from .grid import EXTERIOR, BoxGrid, BoxSet
from .rds import (NoiseModel, OmegaPath, RandomMapSystem, SamplingSpec, cocycle_points,
                  enclose_points, sample_omega)

#: A random point variable: a constant point, or a table keyed by the
#: noise symbol at slot 0.
PointSelector = Union[Sequence[float], Mapping[str, Sequence[float]]]


def resolve_point(selector: PointSelector, omega: OmegaPath) -> np.ndarray:
    if isinstance(selector, Mapping):
        sym = omega.symbol_at(0)
        try:
            return np.asarray(selector[sym], dtype=float)
        except KeyError:
            raise ConfigError(f"point table has no entry for symbol {sym!r}")
    return np.asarray(selector, dtype=float)


# ---------------------------------------------------------------------------
# One-step image machinery
# ---------------------------------------------------------------------------

class _ImageCalculus:
    """One-step box-image masks per symbol, and their compositions.

    Node masks are integers over ``n_boxes + 1`` bits; the top bit is the
    exterior node, which is absorbing.  ``composite(t)`` gives, per box,
    the outer approximation of the pullback image at time ``t`` along the
    window (deepest symbol applied first).
    """

    def __init__(self, system: RandomMapSystem, grid: BoxGrid, omega: OmegaPath,
                 horizon: int, sampling: SamplingSpec, pad: float = 0.0):
        if horizon > omega.window_radius:
            raise WindowExhaustedError(
                f"horizon {horizon} exceeds window radius {omega.window_radius}"
            )
        self.grid = grid
        self.horizon = horizon
        self.ext_bit = 1 << grid.n_boxes
        self._sampling = sampling
        self._pad = pad
        self._system = system
        # Pullback at depth k applies the symbol at slot -k first at that
        # depth; distinct symbols may share one map object (dedupe).
        self._depth_symbols = [omega.symbol_at(-k) for k in range(1, horizon + 1)]
        self._one_step: dict[int, list[int]] = {}
        self._composites: list[list[int] | None] = [None] * (horizon + 1)

    def symbols_used(self) -> list[str]:
        seen, out = set(), []
        for s in self._depth_symbols:
            if s not in seen:
                seen.add(s)
                out.append(s)
        return out

    def _map_key(self, symbol: str) -> int:
        return id(self._system.map_for(symbol))

    def one_step(self, symbol: str) -> list[int]:
        """Per-node one-step image masks under the symbol's map."""
        key = self._map_key(symbol)
        if key in self._one_step:
            return self._one_step[key]
        grid = self.grid
        pts = self._sampling.points_for_all(grid, 1)
        n_samples = pts.shape[1]
        img = self._system.apply_symbol(symbol, pts.reshape(-1, grid.dimension))
        targets, starts, outside = enclose_points(
            grid, img, np.full(img.shape[0], self._pad), strict=False
        )
        masks = [0] * (grid.n_boxes + 1)
        for i in range(img.shape[0]):
            src = i // n_samples
            m = 0
            for f in targets[starts[i]:starts[i + 1]]:
                m |= 1 << int(f)
            if outside[i]:
                m |= self.ext_bit
            masks[src] |= m
        masks[grid.n_boxes] = self.ext_bit
        self._one_step[key] = masks
        return masks

    def apply_one_step(self, symbol: str, node_mask: int) -> int:
        masks = self.one_step(symbol)
        out = 0
        m = node_mask
        while m:
            low = m & -m
            out |= masks[low.bit_length() - 1]
            m ^= low
        return out

    def composite(self, t: int) -> list[int]:
        """Per-node composite image masks at pullback time ``t``."""
        if not 1 <= t <= self.horizon:
            raise WindowExhaustedError(f"composite time {t} outside [1, {self.horizon}]")
        if self._composites[t] is not None:
            return self._composites[t]
        if t == 1:
            comp = list(self.one_step(self._depth_symbols[0]))
        else:
            prev = self.composite(t - 1)
            deepest = self.one_step(self._depth_symbols[t - 1])
            comp = []
            for v in range(self.grid.n_boxes + 1):
                m, acc = deepest[v], 0
                while m:
                    low = m & -m
                    acc |= prev[low.bit_length() - 1]
                    m ^= low
                comp.append(acc)
        self._composites[t] = comp
        return comp

    def image_of_set(self, node_mask: int, t: int) -> int:
        comp = self.composite(t)
        out, m = 0, node_mask
        while m:
            low = m & -m
            out |= comp[low.bit_length() - 1]
            m ^= low
        return out

    def is_invariant(self, node_mask: int) -> bool:
        for s in self.symbols_used():
            if self.apply_one_step(s, node_mask) & ~node_mask:
                return False
        return True

    def hull(self, node_mask: int) -> int:
        work = node_mask
        for _ in range(self.grid.n_boxes + 2):
            grown = work
            for s in self.symbols_used():
                grown |= self.apply_one_step(s, work)
            if grown == work:
                return work
            work = grown
        return work


def _to_node_mask(s: BoxSet) -> int:
    return s.mask | ((1 << s.grid.n_boxes) if s.exterior else 0)


def _from_node_mask(grid: BoxGrid, node_mask: int) -> BoxSet:
    ext_bit = 1 << grid.n_boxes
    return BoxSet(grid, node_mask & (ext_bit - 1), bool(node_mask & ext_bit))


def forward_invariant_hull(system: RandomMapSystem, grid: BoxGrid, s: BoxSet,
                           omega: OmegaPath, params: ChainParams,
                           sampling: SamplingSpec | None = None) -> BoxSet:
    """Smallest superset of ``s`` closed under the one-step box images.

    Closure is taken under the one-step image for every symbol appearing
    in the backward window up to the horizon, so the hull is invariant at
    every fiber any pullback within the horizon visits.
    """
    calc = _ImageCalculus(system, grid, omega, params.horizon,
                          sampling or SamplingSpec())
    return _from_node_mask(grid, calc.hull(_to_node_mask(s)))


@dataclass(frozen=True)
class PreAttractorCheck:
    ok: bool
    witness_t: int | None = None
    witness_box: object = None
    invariant: bool = True
    hulled: bool = False

    def __bool__(self) -> bool:
        return self.ok


def is_pre_attractor(system: RandomMapSystem, grid: BoxGrid, u: BoxSet, tau: int,
                     omega: OmegaPath, params: ChainParams,
                     sampling: SamplingSpec | None = None,
                     auto_hull: bool = False) -> PreAttractorCheck:
    """Check that every lagged pullback image of ``u`` stays inside ``u``.

    Verifies ``image_t(u) ⊆ u`` for all ``t`` in ``[tau, horizon]``.  When
    ``u`` is not closed under the one-step images, either the hull is
    checked instead (``auto_hull=True``, reported) or the raw set is
    tested and the first escaping ``(t, box)`` is returned as a witness.
    """
    if tau < 1 or tau > params.horizon:
        raise ConfigError("need 1 <= tau <= horizon")
    calc = _ImageCalculus(system, grid, omega, params.horizon,
                          sampling or SamplingSpec())
    mask = _to_node_mask(u)
    invariant = calc.is_invariant(mask)
    hulled = False
    if not invariant and auto_hull:
        mask = calc.hull(mask)
        hulled = True
    for t in range(tau, params.horizon + 1):
        img = calc.image_of_set(mask, t)
        escaped = img & ~mask
        if escaped:
            low = escaped & -escaped
            node = low.bit_length() - 1
            box = EXTERIOR if node == grid.n_boxes else grid.multi_index(node)
            return PreAttractorCheck(False, witness_t=t, witness_box=box,
                                     invariant=invariant, hulled=hulled)
    return PreAttractorCheck(True, invariant=invariant, hulled=hulled)


@dataclass(frozen=True)
class AttractorIteration:
    """Result of the nested-intersection attractor construction."""

    attractor: BoxSet
    iterations: int
    converged: bool
    truncated: bool
    monotone_raw: bool
    sizes: tuple[int, ...]


def attractor_from_preattractor(system: RandomMapSystem, grid: BoxGrid, u: BoxSet,
                                tau: int, omega: OmegaPath, params: ChainParams,
                                sampling: SamplingSpec | None = None) -> AttractorIteration:
    """Nested intersection of lagged images ``⋂_n image_{n·tau}(u)``.

    The running intersection is monotone by construction; ``monotone_raw``
    additionally records whether the raw image sequence itself was nested
    (it is whenever ``u`` is forward invariant).  Iteration stops at the
    first fixed point or at ``horizon // tau`` steps, whichever comes
    first; the latter sets the truncation flag.  The result excludes the
    exterior node and may be empty.
    """
    if tau < 1 or tau > params.horizon:
        raise ConfigError("need 1 <= tau <= horizon")
    calc = _ImageCalculus(system, grid, omega, params.horizon,
                          sampling or SamplingSpec())
    return _attractor_iterate(calc, _to_node_mask(u), tau, params.horizon, grid)


def _attractor_iterate(calc: _ImageCalculus, u_mask: int, tau: int, horizon: int,
                       grid: BoxGrid) -> AttractorIteration:
    n_max = horizon // tau
    w = u_mask
    prev_raw: int | None = None
    monotone_raw = True
    sizes = []
    converged = False
    iterations = 0
    for n in range(1, n_max + 1):
        raw = calc.image_of_set(u_mask, n * tau)
        if prev_raw is not None and raw & ~prev_raw:
            monotone_raw = False
        prev_raw = raw
        w_next = w & raw
        iterations = n
        sizes.append(w_next.bit_count())
        if w_next == w:
            converged = True
            break
        w = w_next
    return AttractorIteration(
        attractor=_from_node_mask(grid, w).without_exterior(),
        iterations=iterations,
        converged=converged,
        truncated=not converged,
        monotone_raw=monotone_raw,
        sizes=tuple(sizes),
    )


# ---------------------------------------------------------------------------
# Basins
# ---------------------------------------------------------------------------

def _forward_union_masks(system: RandomMapSystem, grid: BoxGrid, omega: OmegaPath,
                         horizon: int, sampling: SamplingSpec) -> list[int]:
    """Per-box union over ``t in [0, horizon]`` of forward image node masks.

    Forward images are direct: each box's own samples are pushed ``t``
    steps along the path (symbols at slots ``0 .. t-1``) and enclosed.
    """
    if horizon > omega.window_radius:
        raise WindowExhaustedError(
            f"horizon {horizon} exceeds window radius {omega.window_radius}"
        )
    n = grid.n_boxes
    ext_bit = 1 << n
    masks = [1 << b for b in range(n)]  # t = 0: the box itself
    for t in range(1, horizon + 1):
        pts = sampling.points_for_all(grid, t)
        n_samples = pts.shape[1]
        img = cocycle_points(system, t, omega, pts.reshape(-1, grid.dimension))
        targets, starts, outside = enclose_points(
            grid, img, np.zeros(img.shape[0]), strict=False
        )
        for i in range(img.shape[0]):
            src = i // n_samples
            m = 0
            for f in targets[starts[i]:starts[i + 1]]:
                m |= 1 << int(f)
            if outside[i]:
                m |= ext_bit
            masks[src] |= m
    masks.append(ext_bit)  # exterior node is absorbing
    return masks


def _basin_from_masks(grid: BoxGrid, fwd_masks: list[int], u: BoxSet) -> BoxSet:
    u_nodes = _to_node_mask(u)
    mask = 0
    for b in range(grid.n_boxes):
        if fwd_masks[b] & u_nodes:
            mask |= 1 << b
    return BoxSet(grid, mask, u.exterior)


def basin(system: RandomMapSystem, grid: BoxGrid, a: BoxSet, u: BoxSet,
          omega: OmegaPath, params: ChainParams,
          sampling: SamplingSpec | None = None) -> BoxSet:
    """Boxes whose forward image meets ``u`` at some time in ``[0, horizon]``.

    Always contains ``u`` (time zero).  ``a`` is carried for the triple
    interface; the basin is determined by the pre-attractor.
    """
    del a
    fwd = _forward_union_masks(system, grid, omega, params.horizon,
                               sampling or SamplingSpec())
    return _basin_from_masks(grid, fwd, u)


# ---------------------------------------------------------------------------
# Attractor enumeration and the decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttractorTriple:
    """A pre-attractor with its attractor and basin."""

    u: BoxSet
    a: BoxSet
    b: BoxSet
    tau: int
    iterations: int
    truncated: bool
    hulled: bool
    source: str
    merged_from: int = 1

    def to_json_obj(self) -> dict:
        return {
            "U": self.u.to_json_obj(),
            "A": self.a.to_json_obj(),
            "B": self.b.to_json_obj(),
            "tau": self.tau,
            "iterations": self.iterations,
            "truncated": self.truncated,
            "hulled": self.hulled,
            "source": self.source,
            "merged_from": self.merged_from,
        }


def enumerate_attractors(system: RandomMapSystem, grid: BoxGrid, eps: EpsilonField,
                         params: ChainParams, omega: OmegaPath,
                         sampling: SamplingSpec | None = None,
                         graph: ChainGraph | None = None) -> list[AttractorTriple]:
    """One candidate pre-attractor per chain-graph node, deduplicated.

    For every box ``b`` the forward-reachable set is the combinatorial
    endpoint set of chains starting at ``b``; its one-step hull is a
    pre-attractor by construction (one-step images refine chain edges).
    The whole-space candidate is always included.  Triples with equal
    attractor are merged, keeping the largest basin.
    """
    sampling = sampling or SamplingSpec()
    if graph is None:
        graph = build_chain_graph(system, grid, eps, params, omega, sampling)
    calc = _ImageCalculus(system, grid, omega, params.horizon, sampling)
    fwd_masks = _forward_union_masks(system, grid, omega, params.horizon, sampling)

    reach = all_forward_reachable(graph)
    full_mask = (1 << (grid.n_boxes + 1)) - 1
    candidates: dict[int, str] = {full_mask: "whole_space"}
    for b in range(grid.n_boxes):
        m = reach[b]
        if m not in candidates:
            candidates[m] = f"box {b}"

    by_attractor: dict[int, AttractorTriple] = {}
    order: list[int] = []
    for u_mask, source in candidates.items():
        hulled_mask = calc.hull(u_mask)
        hulled = hulled_mask != u_mask
        # Closure under every one-step image implies containment of every
        # composite image, so the hulled candidate is a pre-attractor.
        u_set = _from_node_mask(grid, hulled_mask)
        it = _attractor_iterate(calc, hulled_mask, params.tau, params.horizon, grid)
        b_set = _basin_from_masks(grid, fwd_masks, u_set)
        triple = AttractorTriple(
            u=u_set, a=it.attractor, b=b_set, tau=params.tau,
            iterations=it.iterations, truncated=it.truncated, hulled=hulled,
            source=source,
        )
        key = it.attractor.mask
        if key not in by_attractor:
            by_attractor[key] = triple
            order.append(key)
        else:
            old = by_attractor[key]
            best = triple if len(triple.b) > len(old.b) else old
            by_attractor[key] = AttractorTriple(
                u=best.u, a=best.a, b=best.b, tau=best.tau,
                iterations=best.iterations, truncated=best.truncated,
                hulled=best.hulled, source=best.source,
                merged_from=old.merged_from + 1,
            )
    return [by_attractor[k] for k in order]


@dataclass
class ConleyDecomposition:
    """Chain recurrent set, attractor triples and the decomposition residual."""

    grid: BoxGrid
    cr: BoxSet
    triples: list[AttractorTriple]
    union_b_minus_a: BoxSet
    residual: BoxSet
    violations: dict
    omega_digest: str
    provenance: dict = field(default_factory=dict)

    @property
    def invariants_ok(self) -> bool:
        return all(len(v) == 0 for v in self.violations.values())

    def to_json_obj(self) -> dict:
        return {
            "omega": self.omega_digest,
            "cr": self.cr.to_json_obj(),
            "triples": [t.to_json_obj() for t in self.triples],
            "union_b_minus_a": self.union_b_minus_a.to_json_obj(),
            "residual": self.residual.to_json_obj(),
            "violations": {k: sorted(v) for k, v in self.violations.items()},
            "invariants_ok": self.invariants_ok,
            "provenance": self.provenance,
        }


def conley_decomposition(system: RandomMapSystem, grid: BoxGrid, eps: EpsilonField,
                         params: ChainParams, omega: OmegaPath,
                         sampling: SamplingSpec | None = None) -> ConleyDecomposition:
    """Compute the decomposition data for one noise window and verify it.

    The residual is the symmetric difference between the complement of
    the chain recurrent set (within the window) and the union of
    basin-minus-attractor differences over all enumerated triples.  The
    containments ``CR ∩ U ⊆ A``, ``CR ∩ B ⊆ A`` and
    ``⋃(B−A) ∩ CR = ∅`` are checked exactly per triple and reported as
    violations, never silently dropped.
    """
    sampling = sampling or SamplingSpec()
    graph = build_chain_graph(system, grid, eps, params, omega, sampling)
    cr = chain_recurrent_set(graph)
    triples = enumerate_attractors(system, grid, eps, params, omega, sampling, graph)

    union_mask = 0
    viol_u, viol_b, viol_union = set(), set(), set()
    for tr in triples:
        diff = tr.b.mask & ~tr.a.mask
        union_mask |= diff
        viol_u.update(BoxSet(grid, (cr.mask & tr.u.mask) & ~tr.a.mask).iter_flat())
        viol_b.update(BoxSet(grid, (cr.mask & tr.b.mask) & ~tr.a.mask).iter_flat())
        viol_union.update(BoxSet(grid, diff & cr.mask).iter_flat())

    interior_all = (1 << grid.n_boxes) - 1
    residual_mask = (interior_all & ~cr.mask) ^ union_mask
    return ConleyDecomposition(
        grid=grid,
        cr=cr,
        triples=triples,
        union_b_minus_a=BoxSet(grid, union_mask, False),
        residual=BoxSet(grid, residual_mask, False),
        violations={
            "cr_in_U_not_in_A": viol_u,
            "cr_in_B_not_in_A": viol_b,
            "union_b_minus_a_meets_cr": viol_union,
        },
        omega_digest=omega.digest(),
        provenance=dict(graph.provenance),
    )


# ---------------------------------------------------------------------------
# Monte Carlo chain recurrence index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainIndexEstimate:
    """Monte Carlo estimate of the probability a point is chain recurrent."""

    point: tuple
    samples: int
    hits: int
    delta_hat: float
    wilson_low: float
    wilson_high: float

    def interval_contains(self, value: float) -> bool:
        return self.wilson_low <= value <= self.wilson_high


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval; well behaved at rates near 0 and 1."""
    if n <= 0:
        raise ConfigError("sample count must be positive")
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def chain_recurrence_index(system: RandomMapSystem, grid: BoxGrid, eps: EpsilonField,
                           params: ChainParams, point: PointSelector,
                           noise_model: NoiseModel, samples: int, seed: int,
                           sampling: SamplingSpec | None = None) -> ChainIndexEstimate:
    """Fraction of noise draws for which the point's box is chain recurrent."""
    if samples < 1:
        raise ConfigError("need at least one noise sample")
    sampling = sampling or SamplingSpec()
    window = max(params.horizon, 1)
    hits = 0
    probe = None
    for i in range(samples):
        omega = sample_omega(noise_model, window, seed=(seed, i))
        graph = build_chain_graph(system, grid, eps, params, omega, sampling)
        cr = chain_recurrent_set(graph)
        pt = resolve_point(point, omega)
        probe = pt if probe is None else probe
        box = grid.box_of(pt)
        if box is not EXTERIOR and cr.contains_flat(grid.flat_index(box)):
            hits += 1
    low, high = wilson_interval(hits, samples)
    return ChainIndexEstimate(
        point=tuple(float(x) for x in np.atleast_1d(probe)),
        samples=samples,
        hits=hits,
        delta_hat=hits / samples,
        wilson_low=low,
        wilson_high=high,
    )
