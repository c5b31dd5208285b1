"""Noise model, shift flow and cocycle engine for random map systems.

A random map system drives the state by composing one continuous map per
noise symbol.  Noise realizations are finite symbol windows indexed by
integer time slots ``-N .. N-1``; the symbol at slot ``k`` drives the
step from time ``k`` to ``k+1``.  The one-step generator along a path is
the map attached to the symbol at slot 0, and longer evaluations compose
maps along the path (forward) or along the shifted past (pullback).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import backend
from .errors import ConfigError, WindowExhaustedError
from .grid import EXTERIOR, BoxGrid, BoxId, BoxSet

MapFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NoiseModel:
    """Finite-alphabet noise law, invariant under the time shift.

    ``iid`` draws every slot independently; ``constant_mixture`` draws a
    single symbol and repeats it over the whole window (a mixture of
    constant paths).  Both laws are shift invariant.
    """

    alphabet: tuple[str, ...]
    law: str
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if not self.alphabet:
            raise ConfigError("alphabet must be nonempty")
        if self.law not in ("iid", "constant_mixture"):
            raise ConfigError(f"unknown noise law {self.law!r}")
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (len(self.alphabet),):
            raise ConfigError("need one probability per symbol")
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise ConfigError("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class OmegaPath:
    """A sampled noise window: symbols at slots ``-N .. N-1``."""

    window_radius: int
    symbols: tuple[str, ...]
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.window_radius < 1:
            raise ConfigError("window_radius must be >= 1")
        if len(self.symbols) != 2 * self.window_radius:
            raise ConfigError("symbol window must have length 2 * window_radius")

    def symbol_at(self, slot: int) -> str:
        """Symbol driving the step from time ``slot`` to ``slot + 1``."""
        if not -self.window_radius <= slot < self.window_radius:
            raise WindowExhaustedError(
                f"slot {slot} outside window ±{self.window_radius}"
            )
        return self.symbols[slot + self.window_radius]

    def digest(self) -> str:
        payload = f"{self.window_radius}|{'|'.join(self.symbols)}".encode()
        return hashlib.sha1(payload).hexdigest()[:12]

    def to_json_obj(self) -> dict:
        return {
            "window_radius": self.window_radius,
            "symbols": list(self.symbols),
            "provenance": dict(self.provenance),
        }


def sample_omega(model: NoiseModel, window_radius: int,
                 seed: int | tuple[int, ...]) -> OmegaPath:
    """Draw one noise window, deterministically in ``(model, radius, seed)``."""
    if window_radius < 1:
        raise ConfigError("window_radius must be >= 1")
    rng = np.random.default_rng(seed)
    p = np.asarray(model.probabilities, dtype=float)
    n = 2 * window_radius
    if model.law == "iid":
        draws = rng.choice(len(model.alphabet), size=n, p=p)
        symbols = tuple(model.alphabet[int(i)] for i in draws)
    else:  # constant_mixture
        one = int(rng.choice(len(model.alphabet), p=p))
        symbols = (model.alphabet[one],) * n
    seed_record = list(seed) if isinstance(seed, tuple) else int(seed)
    return OmegaPath(
        window_radius=window_radius,
        symbols=symbols,
        provenance={"seed": seed_record, "law": model.law},
    )


def shift(omega: OmegaPath, k: int) -> OmegaPath:
    """The driving flow: ``shift(omega, k)`` reads slot ``j`` as ``omega`` slot ``j+k``.

    Shifting shrinks the usable window by ``|k|``; an emptied window is
    rejected.
    """
    if k == 0:
        return omega
    new_radius = omega.window_radius - abs(k)
    if new_radius < 1:
        raise WindowExhaustedError(
            f"shift by {k} empties a window of radius {omega.window_radius}"
        )
    n = omega.window_radius
    start = (-new_radius + k) + n
    stop = (new_radius + k) + n
    return OmegaPath(
        window_radius=new_radius,
        symbols=omega.symbols[start:stop],
        provenance={"parent": dict(omega.provenance), "shift": k},
    )


@dataclass(frozen=True)
class RandomMapSystem:
    """Per-symbol continuous maps composed as a cocycle over the shift."""

    name: str
    dimension: int
    maps: Mapping[str, MapFn]

    def map_for(self, symbol: str) -> MapFn:
        try:
            return self.maps[symbol]
        except KeyError:
            raise ConfigError(f"system {self.name!r} has no map for symbol {symbol!r}")

    def apply_symbol(self, symbol: str, points: np.ndarray) -> np.ndarray:
        out = np.asarray(self.map_for(symbol)(np.asarray(points, dtype=float)), dtype=float)
        if out.shape != points.shape:
            raise ConfigError(f"map for {symbol!r} changed point-array shape")
        return out


# ---------------------------------------------------------------------------
# Built-in catalog
# ---------------------------------------------------------------------------

def translation2d(symbols: Sequence[str] = ("a", "b")) -> RandomMapSystem:
    """(x, y) -> (x + 1, y) for every symbol."""

    def step(pts: np.ndarray) -> np.ndarray:
        out = pts.copy()
        out[..., 0] += 1.0
        return out

    return RandomMapSystem("translation2d", 2, {s: step for s in symbols})


def identity_d(dimension: int, symbols: Sequence[str] = ("a", "b")) -> RandomMapSystem:
    def step(pts: np.ndarray) -> np.ndarray:
        return pts.copy()

    return RandomMapSystem(f"identity_{dimension}d", int(dimension), {s: step for s in symbols})


def contraction1d(lam: float, symbols: Sequence[str] = ("a", "b")) -> RandomMapSystem:
    """x -> lam * x."""

    def step(pts: np.ndarray) -> np.ndarray:
        return lam * pts

    return RandomMapSystem("contraction1d", 1, {s: step for s in symbols})


def bistable1d(c: float, symbols: Sequence[str] = ("a", "b")) -> RandomMapSystem:
    """x -> x + c * x * (1 - x^2); stable points at ±1, unstable at 0."""

    def step(pts: np.ndarray) -> np.ndarray:
        return pts + c * pts * (1.0 - pts**2)

    return RandomMapSystem("bistable1d", 1, {s: step for s in symbols})


def affine_per_symbol(dimension: int,
                      coeffs: Mapping[str, tuple[Sequence[float], Sequence[float]]]
                      ) -> RandomMapSystem:
    """Diagonal affine maps ``x -> scale * x + offset``, one per symbol."""

    def make(scale, offset) -> MapFn:
        s = np.asarray(scale, dtype=float)
        o = np.asarray(offset, dtype=float)

        def step(pts: np.ndarray) -> np.ndarray:
            return pts * s + o

        return step

    maps = {sym: make(sc, off) for sym, (sc, off) in coeffs.items()}
    return RandomMapSystem("affine_per_symbol", int(dimension), maps)


def _require_mapping(params, names):
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"missing system parameters: {missing}")


def system_from_config(name: str, params: Mapping) -> RandomMapSystem:
    """Instantiate a catalog system from a declarative description."""
    params = dict(params or {})
    if name == "translation2d":
        return translation2d(tuple(params.get("symbols", ("a", "b"))))
    if name == "identity_d":
        _require_mapping(params, ["dimension"])
        return identity_d(params["dimension"], tuple(params.get("symbols", ("a", "b"))))
    if name == "contraction1d":
        _require_mapping(params, ["lam"])
        return contraction1d(float(params["lam"]), tuple(params.get("symbols", ("a", "b"))))
    if name == "bistable1d":
        _require_mapping(params, ["c"])
        return bistable1d(float(params["c"]), tuple(params.get("symbols", ("a", "b"))))
    if name == "affine_per_symbol":
        _require_mapping(params, ["dimension", "coeffs"])
        coeffs = {
            sym: (spec["scale"], spec["offset"]) for sym, spec in params["coeffs"].items()
        }
        return affine_per_symbol(int(params["dimension"]), coeffs)
    raise ConfigError(
        f"unknown system {name!r}; available: "
        "translation2d, identity_d, contraction1d, bistable1d, affine_per_symbol"
    )


CATALOG_NAMES = (
    "translation2d", "identity_d", "contraction1d", "bistable1d", "affine_per_symbol",
)


# ---------------------------------------------------------------------------
# Cocycle evaluation
# ---------------------------------------------------------------------------

def cocycle_points(system: RandomMapSystem, n: int, omega: OmegaPath,
                   points: np.ndarray) -> np.ndarray:
    """Forward evaluation on a point batch: symbols at slots ``0 .. n-1``."""
    if n < 0:
        raise ConfigError("time must be nonnegative")
    if n > omega.window_radius:
        raise WindowExhaustedError(f"n={n} exceeds window radius {omega.window_radius}")
    pts = np.asarray(points, dtype=float)
    for k in range(n):
        pts = system.apply_symbol(omega.symbol_at(k), pts)
    return pts


def pullback_points(system: RandomMapSystem, t: int, omega: OmegaPath,
                    points: np.ndarray) -> np.ndarray:
    """Pullback evaluation on a point batch: symbols at slots ``-t .. -1``.

    Equals the forward evaluation along ``shift(omega, -t)``.
    """
    if t < 0:
        raise ConfigError("time must be nonnegative")
    if t > omega.window_radius:
        raise WindowExhaustedError(f"t={t} exceeds window radius {omega.window_radius}")
    pts = np.asarray(points, dtype=float)
    for k in range(-t, 0):
        pts = system.apply_symbol(omega.symbol_at(k), pts)
    return pts


def cocycle_apply(system: RandomMapSystem, n: int, omega: OmegaPath,
                  x: Sequence[float]) -> np.ndarray:
    """phi(n, omega) x."""
    return cocycle_points(system, n, omega, np.asarray(x, dtype=float)[None, :])[0]


def pullback_apply(system: RandomMapSystem, t: int, omega: OmegaPath,
                   x: Sequence[float]) -> np.ndarray:
    """phi(t, shift(omega, -t)) x."""
    return pullback_points(system, t, omega, np.asarray(x, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# Box sampling and box images
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingSpec:
    """Deterministic per-box sample points: corners + center + seeded interior.

    ``inset`` pulls the corner samples into the box by that fraction of the
    width per axis, keeping samples inside the half-open cell they
    represent (samples on shared faces would attribute the neighbor's
    dynamics to this box).  ``interior`` counts the seeded interior points;
    ``None`` means ``2**d``.  The interior sub-seed is derived from
    ``(seed, flat box index, t)``.
    """

    interior: int | None = None
    inset: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.inset < 0.5:
            raise ConfigError("inset must lie in [0, 0.5)")
        if self.interior is not None and self.interior < 0:
            raise ConfigError("interior sample count must be nonnegative")

    def n_interior(self, dimension: int) -> int:
        return 2**dimension if self.interior is None else self.interior

    def points_for_box(self, grid: BoxGrid, flat: int, t: int) -> np.ndarray:
        lo, hi = grid.box_bounds(flat)
        return self._assemble(grid, lo[None, :], hi[None, :], [flat], t)[0]

    def points_for_all(self, grid: BoxGrid, t: int) -> np.ndarray:
        """Samples for every box, shape ``(n_boxes, n_samples, d)``."""
        centers = grid.centers()
        lo = centers - grid.width / 2.0
        hi = centers + grid.width / 2.0
        return self._assemble(grid, lo, hi, range(grid.n_boxes), t)

    def _assemble(self, grid: BoxGrid, lo: np.ndarray, hi: np.ndarray,
                  flats, t: int) -> np.ndarray:
        d = grid.dimension
        n_boxes = lo.shape[0]
        pad = self.inset * grid.width
        ilo, ihi = lo + pad, hi - pad
        corners = []
        for mask in range(2**d):
            pick = np.array([(mask >> k) & 1 for k in range(d)], dtype=bool)
            corners.append(np.where(pick, ihi, ilo))
        blocks = [np.stack(corners, axis=1), ((lo + hi) / 2.0)[:, None, :]]
        m = self.n_interior(d)
        if m > 0:
            inner = np.empty((n_boxes, m, d))
            for row, flat in enumerate(flats):
                rng = np.random.default_rng(
                    np.random.SeedSequence((self.seed, int(flat), int(t)))
                )
                inner[row] = ilo[row] + rng.random((m, d)) * (ihi[row] - ilo[row])
            blocks.append(inner)
        return np.concatenate(blocks, axis=1)


def enclose_points(grid: BoxGrid, points: np.ndarray, radii: np.ndarray,
                   strict: bool):
    """Backend dispatch for the enclosure query."""
    return backend.enclose_batch(
        np.ascontiguousarray(points, dtype=float),
        np.ascontiguousarray(radii, dtype=float),
        grid.lo, grid.width, grid.resolution, grid.strides, strict,
    )


def box_image(system: RandomMapSystem, t: int, omega: OmegaPath, box: BoxId,
              grid: BoxGrid, sampling: SamplingSpec | None = None,
              pad: float = 0.0) -> BoxSet:
    """Outer box enclosure of one pullback image.

    Samples the box, maps the samples by ``phi(t, shift(omega, -t))`` and
    returns every box intersecting the closed ``pad``-neighborhood of the
    image points; the exterior node is included when any image point
    leaves the window.  The exterior itself is absorbing.
    """
    if pad < 0:
        raise ConfigError("pad must be nonnegative")
    sampling = sampling or SamplingSpec()
    if box is EXTERIOR:
        return BoxSet(grid, 0, True)
    flat = grid.flat_index(box) if isinstance(box, tuple) else int(box)
    pts = sampling.points_for_box(grid, flat, t)
    img = pullback_points(system, t, omega, pts)
    targets, starts, out = enclose_points(
        grid, img, np.full(img.shape[0], float(pad)), strict=False
    )
    mask = 0
    for f in targets:
        mask |= 1 << int(f)
    return BoxSet(grid, mask, bool(out.any()))
