"""
Discretized domains, node masks, exhaustions and set families.

A :class:`Geometry` is a tensor grid (interval, radial-N or 2D box) carrying
piecewise-linear nodal fields. Quadrature is one point per cell at the cell
midpoint. Compact subsets are node masks: a node belongs to a set iff its
coordinate lies in the continuum set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma

from hardylab.errors import ConfigurationError, DomainError, UsageError

logger = logging.getLogger("hardylab")

KINDS = ("interval", "radial", "box2d")
FAMILY_STRATEGIES = ("balls", "sublevel", "annuli", "explicit")

# relative slack used when deciding whether a node lies in a closed set
_MEMBERSHIP_TOL = 1e-9


def unit_sphere_area(N):
    """Surface area of the unit sphere in R^N; 2 for N = 1."""
    return 2.0 * math.pi ** (N / 2.0) / float(gamma(N / 2.0))


@dataclass(frozen=True, eq=False)
class Geometry:
    """
    An immutable tensor grid.

    Attributes:
        kind (str): ``interval``, ``radial`` or ``box2d``.
        dim (int): Ambient dimension N used by volume weights and Morrey moduli.
        bounds (tuple): ``(a, b)`` for 1D kinds, ``((x0, x1), (y0, y1))`` for boxes.
        resolution (tuple): Cells per axis.
        node_coords (np.ndarray): ``(n_nodes, spatial_dim)`` coordinates, lexicographic.
        cells (np.ndarray): Vertex indices per cell, 2 in 1D, 4 in 2D ordered 00, 10, 01, 11.
        cell_measures (np.ndarray): Positive volume per cell.
        cell_midpoints (np.ndarray): ``(n_cells, spatial_dim)`` quadrature points.
        interior_mask (np.ndarray): Nodes where test functions may be nonzero.
        spacing (float): Largest cell diameter.
        exclude_origin (bool): Radial only, whether r = 0 is removed from the domain.
    """

    kind: str
    dim: int
    bounds: tuple
    resolution: tuple
    node_coords: np.ndarray
    cells: np.ndarray
    cell_measures: np.ndarray
    cell_midpoints: np.ndarray
    interior_mask: np.ndarray
    spacing: float
    exclude_origin: bool = False
    descriptor: dict = field(default_factory=dict)

    @property
    def spatial_dim(self):
        return self.node_coords.shape[1]

    @property
    def n_nodes(self):
        return self.node_coords.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def total_measure(self):
        return float(np.sum(self.cell_measures))

    @cached_property
    def cell_widths(self):
        """Per-cell edge lengths, shape ``(n_cells, spatial_dim)``."""
        coords = self.node_coords
        if self.spatial_dim == 1:
            return (coords[self.cells[:, 1], 0] - coords[self.cells[:, 0], 0])[:, None]
        hx = coords[self.cells[:, 1], 0] - coords[self.cells[:, 0], 0]
        hy = coords[self.cells[:, 2], 1] - coords[self.cells[:, 0], 1]
        return np.column_stack([hx, hy])

    @cached_property
    def grad_operator(self):
        """
        Sparse map from nodal values to per-cell gradients.

        Row ``c * spatial_dim + k`` holds the k-th gradient component on cell c:
        a forward difference in 1D, the bilinear cell-average gradient in 2D.
        """
        n_cells, sdim = self.n_cells, self.spatial_dim
        widths = self.cell_widths
        if sdim == 1:
            inv_h = 1.0 / widths[:, 0]
            rows = np.repeat(np.arange(n_cells), 2)
            cols = self.cells.ravel()
            vals = np.column_stack([-inv_h, inv_h]).ravel()
        else:
            c = np.arange(n_cells)
            v00, v10, v01, v11 = self.cells.T
            hx, hy = widths[:, 0], widths[:, 1]
            rows = np.concatenate([np.repeat(2 * c, 4), np.repeat(2 * c + 1, 4)])
            cols = np.concatenate([
                np.column_stack([v00, v10, v01, v11]).ravel(),
                np.column_stack([v00, v10, v01, v11]).ravel(),
            ])
            gx = 0.5 / hx
            gy = 0.5 / hy
            vals = np.concatenate([
                np.column_stack([-gx, gx, -gx, gx]).ravel(),
                np.column_stack([-gy, -gy, gy, gy]).ravel(),
            ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n_cells * sdim, self.n_nodes))

    @cached_property
    def avg_operator(self):
        """Sparse map from nodal values to cell averages."""
        n_cells, k = self.cells.shape
        rows = np.repeat(np.arange(n_cells), k)
        vals = np.full(n_cells * k, 1.0 / k)
        return sp.csr_matrix((vals, (rows, self.cells.ravel())), shape=(n_cells, self.n_nodes))

    @cached_property
    def incidence(self):
        n_cells, k = self.cells.shape
        rows = np.repeat(np.arange(n_cells), k)
        vals = np.ones(n_cells * k, dtype=np.int64)
        return sp.csr_matrix((vals, (rows, self.cells.ravel())), shape=(n_cells, self.n_nodes))

    @cached_property
    def node_radius(self):
        """Euclidean distance of every node from the origin."""
        return np.sqrt(np.sum(self.node_coords ** 2, axis=1))

    @cached_property
    def distance_to_boundary(self):
        """Distance of every node to the continuum boundary of the domain."""
        coords = self.node_coords
        if self.kind == "box2d":
            (x0, x1), (y0, y1) = self.bounds
            x, y = coords[:, 0], coords[:, 1]
            return np.minimum.reduce([x - x0, x1 - x, y - y0, y1 - y])
        a, b = self.bounds
        x = coords[:, 0]
        if self.kind == "radial" and a == 0.0 and not self.exclude_origin:
            return b - x
        return np.minimum(x - a, b - x)

    @cached_property
    def diameter(self):
        lo = self.node_coords.min(axis=0)
        hi = self.node_coords.max(axis=0)
        return float(np.sqrt(np.sum((hi - lo) ** 2)))

    def cell_mask(self, flags):
        """Cells whose vertices are all flagged."""
        counts = self.incidence @ np.asarray(flags, dtype=np.int64)
        return counts == self.cells.shape[1]

    def mask_interior(self, flags):
        """
        Flagged nodes all of whose incident cells are fully flagged.

        These are the nodes left free by a Dirichlet condition on the edge of
        the flagged set.
        """
        flags = np.asarray(flags, dtype=bool)
        broken = (~self.cell_mask(flags)).astype(np.int64)
        touching_broken = (self.incidence.T @ broken) > 0
        return flags & ~touching_broken

    def check_same(self, other):
        if other is not self:
            raise UsageError("fields live on different geometries")


def _as_pair(value, name):
    try:
        a, b = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"geometry.{name} must be a pair of numbers",
                                 [(f"geometry.{name}", None, f"got {value!r}")])
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ConfigurationError("degenerate geometry bounds",
                                 [(f"geometry.{name}", None, f"need a < b, got ({a}, {b})")])
    return a, b


def _resolution(value, axes):
    if isinstance(value, (list, tuple)):
        values = [int(v) for v in value]
    else:
        values = [int(value)] * axes
    if len(values) != axes:
        raise ConfigurationError("geometry.resolution has the wrong length",
                                 [("geometry.resolution", None, f"expected {axes} entries")])
    if any(v < 2 for v in values):
        raise ConfigurationError("geometry.resolution must be at least 2",
                                 [("geometry.resolution", None, f"got {value!r}")])
    return tuple(values)


def build_geometry(spec: Mapping) -> Geometry:
    """
    Build a :class:`Geometry` from a descriptor mapping.

    :param spec: Mapping with ``kind``, ``bounds``, ``resolution`` and, for
        radial grids, ``dim`` and optionally ``exclude_origin``.
    :return: The geometry.
    :raises ConfigurationError: On unknown kinds, degenerate bounds or
        resolution below 2.
    """
    kind = spec.get("kind")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown geometry kind {kind!r}",
                                 [("geometry.kind", None, f"expected one of {', '.join(KINDS)}")])
    if "bounds" not in spec or "resolution" not in spec:
        missing = [k for k in ("bounds", "resolution") if k not in spec]
        raise ConfigurationError("incomplete geometry descriptor",
                                 [(f"geometry.{k}", None, "missing") for k in missing])

    descriptor = dict(spec)
    if kind == "box2d":
        bounds_in = spec["bounds"]
        if not isinstance(bounds_in, (list, tuple)) or len(bounds_in) != 2:
            raise ConfigurationError("box2d bounds need two axis pairs",
                                     [("geometry.bounds", None, "expected [[x0, x1], [y0, y1]]")])
        bx = _as_pair(bounds_in[0], "bounds[0]")
        by = _as_pair(bounds_in[1], "bounds[1]")
        nx, ny = _resolution(spec["resolution"], 2)
        return _build_box(bx, by, nx, ny, descriptor)

    a, b = _as_pair(spec["bounds"], "bounds")
    (n,) = _resolution(spec["resolution"], 1)
    if kind == "interval":
        return _build_interval(a, b, n, descriptor)

    N = int(spec.get("dim", 0))
    if N < 1:
        raise ConfigurationError("radial geometry needs a positive dimension",
                                 [("geometry.dim", None, f"got {spec.get('dim')!r}")])
    if a < 0.0:
        raise ConfigurationError("radial inner radius must be nonnegative",
                                 [("geometry.bounds", None, f"got inner radius {a}")])
    return _build_radial(a, b, n, N, bool(spec.get("exclude_origin", False)), descriptor)


def _build_interval(a, b, n, descriptor):
    x = np.linspace(a, b, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    interior = np.zeros(n + 1, dtype=bool)
    interior[1:-1] = True
    widths = np.diff(x)
    logger.debug(f"Built interval geometry ({a}, {b}) with {n} cells")
    return Geometry(
        kind="interval", dim=1, bounds=(a, b), resolution=(n,),
        node_coords=x[:, None], cells=cells, cell_measures=widths,
        cell_midpoints=(0.5 * (x[:-1] + x[1:]))[:, None], interior_mask=interior,
        spacing=float(widths.max()), descriptor=descriptor,
    )


def _build_radial(r0, R, n, N, exclude_origin, descriptor):
    r = np.linspace(r0, R, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    mid = 0.5 * (r[:-1] + r[1:])
    widths = np.diff(r)
    measures = unit_sphere_area(N) * mid ** (N - 1) * widths
    interior = np.zeros(n + 1, dtype=bool)
    interior[1:-1] = True
    # the origin is a regular point of a full ball
    if r0 == 0.0 and not exclude_origin:
        interior[0] = True
    logger.debug(f"Built radial geometry N={N} ({r0}, {R}) with {n} cells")
    return Geometry(
        kind="radial", dim=N, bounds=(r0, R), resolution=(n,),
        node_coords=r[:, None], cells=cells, cell_measures=measures,
        cell_midpoints=mid[:, None], interior_mask=interior,
        spacing=float(widths.max()), exclude_origin=exclude_origin, descriptor=descriptor,
    )


def _build_box(bx, by, nx, ny, descriptor):
    xs = np.linspace(bx[0], bx[1], nx + 1)
    ys = np.linspace(by[0], by[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    v00 = (i * (ny + 1) + j).ravel()
    v10 = ((i + 1) * (ny + 1) + j).ravel()
    cells = np.column_stack([v00, v10, v00 + 1, v10 + 1])

    hx = np.diff(xs)
    hy = np.diff(ys)
    measures = np.outer(hx, hy).ravel()
    mid = np.column_stack([
        np.repeat(0.5 * (xs[:-1] + xs[1:]), ny),
        np.tile(0.5 * (ys[:-1] + ys[1:]), nx),
    ])

    interior = np.zeros((nx + 1, ny + 1), dtype=bool)
    interior[1:-1, 1:-1] = True
    logger.debug(f"Built box2d geometry {bx}x{by} with {nx}x{ny} cells")
    return Geometry(
        kind="box2d", dim=2, bounds=(bx, by), resolution=(nx, ny),
        node_coords=coords, cells=cells, cell_measures=measures, cell_midpoints=mid,
        interior_mask=interior.ravel(), spacing=float(np.hypot(hx.max(), hy.max())),
        descriptor=descriptor,
    )


@dataclass(frozen=True, eq=False)
class SubsetMask:
    """A set of nodes with a human-readable descriptor."""

    geometry: Geometry
    flags: np.ndarray
    descriptor: str

    @property
    def count(self):
        return int(np.count_nonzero(self.flags))

    @property
    def is_empty(self):
        return self.count == 0

    def cells(self):
        return self.geometry.cell_mask(self.flags)

    def measure(self):
        return float(np.sum(self.geometry.cell_measures[self.cells()]))

    def free_nodes(self):
        """Nodes left free when Dirichlet data sits on the edge of the set."""
        return self.geometry.mask_interior(self.flags) & self.geometry.interior_mask

    def issubset(self, other):
        return bool(np.all(~self.flags | other.flags))

    def is_compact(self):
        return bool(np.all(~self.flags | self.geometry.interior_mask))

    def __and__(self, other):
        return SubsetMask(self.geometry, self.flags & other.flags,
                          f"{self.descriptor} & {other.descriptor}")

    def __sub__(self, other):
        return SubsetMask(self.geometry, self.flags & ~other.flags,
                          f"{self.descriptor} \\ {other.descriptor}")


def interior(geometry):
    return SubsetMask(geometry, geometry.interior_mask.copy(), "interior")


def _tol(geometry):
    return _MEMBERSHIP_TOL * max(geometry.diameter, 1.0)


def _point(geometry, center):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.shape != (geometry.spatial_dim,):
        raise ConfigurationError("point has the wrong dimension",
                                 [("center", None, f"expected {geometry.spatial_dim} coordinates")])
    return c


def ball_mask(geometry, center, radius):
    """Closed ball; on radial grids only the origin is an admissible center."""
    c = _point(geometry, center)
    if geometry.kind == "radial" and c[0] != 0.0:
        raise ConfigurationError("radial geometries only support balls centered at the origin",
                                 [("center", None, f"got {c[0]}")])
    dist = np.sqrt(np.sum((geometry.node_coords - c) ** 2, axis=1))
    label = ", ".join(f"{v:g}" for v in c)
    return SubsetMask(geometry, dist <= radius + _tol(geometry), f"ball(({label}), r={radius:g})")


def annulus_mask(geometry, inner, outer):
    r = geometry.node_radius
    tol = _tol(geometry)
    return SubsetMask(geometry, (r >= inner - tol) & (r <= outer + tol),
                      f"annulus({inner:g}, {outer:g})")


def interval_mask(geometry, a, b):
    if geometry.spatial_dim != 1:
        raise ConfigurationError("interval sets need a 1D geometry",
                                 [("interval", None, f"geometry kind is {geometry.kind}")])
    x = geometry.node_coords[:, 0]
    tol = _tol(geometry)
    return SubsetMask(geometry, (x >= a - tol) & (x <= b + tol), f"interval({a:g}, {b:g})")


def box_mask(geometry, xr, yr):
    if geometry.spatial_dim != 2:
        raise ConfigurationError("box sets need a 2D geometry",
                                 [("box", None, f"geometry kind is {geometry.kind}")])
    x, y = geometry.node_coords[:, 0], geometry.node_coords[:, 1]
    tol = _tol(geometry)
    flags = (x >= xr[0] - tol) & (x <= xr[1] + tol) & (y >= yr[0] - tol) & (y <= yr[1] + tol)
    return SubsetMask(geometry, flags, f"box(({xr[0]:g}, {xr[1]:g}), ({yr[0]:g}, {yr[1]:g}))")


def mask_from_descriptor(geometry, descriptor):
    """
    Turn a set descriptor into a :class:`SubsetMask`.

    Accepted forms: ``"interior"``, ``{"interval": [a, b]}``,
    ``{"ball": {"center": c, "radius": r}}``, ``{"annulus": [r1, r2]}`` and
    ``{"box": [[x0, x1], [y0, y1]]}``.
    """
    if isinstance(descriptor, SubsetMask):
        return descriptor
    if descriptor == "interior":
        return interior(geometry)
    if not isinstance(descriptor, Mapping) or len(descriptor) != 1:
        raise ConfigurationError("unrecognised set descriptor",
                                 [("set", None, f"got {descriptor!r}")])
    (key, value), = descriptor.items()
    try:
        if key == "interval":
            a, b = (float(v) for v in value)
            return interval_mask(geometry, a, b)
        if key == "ball":
            return ball_mask(geometry, value.get("center", 0.0), float(value["radius"]))
        if key == "annulus":
            r1, r2 = (float(v) for v in value)
            return annulus_mask(geometry, r1, r2)
        if key == "box":
            return box_mask(geometry, [float(v) for v in value[0]], [float(v) for v in value[1]])
    except (TypeError, KeyError, IndexError, AttributeError) as e:
        raise ConfigurationError(f"malformed {key} descriptor",
                                 [(f"set.{key}", None, str(e) or repr(e))])
    raise ConfigurationError(f"unknown set kind {key!r}",
                             [("set", None, "expected interval, ball, annulus, box or interior")])


def exhaustion(geometry: Geometry, count: int) -> list:
    """
    Nested compact masks growing towards the whole domain.

    Balls of radius ``R / 2**(count - k + 1)`` on full radial balls, otherwise
    boxes shrunk by ``L / 2**(k + 1)`` on each side of every axis.

    :raises ConfigurationError: If ``count < 2`` or the grid cannot resolve
        ``count`` strictly nested levels.
    """
    if count < 2:
        raise ConfigurationError("an exhaustion needs at least 2 elements",
                                 [("exhaustion.count", None, f"got {count}")])
    masks = []
    if geometry.kind == "radial" and geometry.bounds[0] == 0.0 and not geometry.exclude_origin:
        R = geometry.bounds[1]
        for k in range(1, count + 1):
            radius = R / 2 ** (count - k + 1)
            m = ball_mask(geometry, [0.0], radius)
            masks.append(SubsetMask(geometry, m.flags & geometry.interior_mask, m.descriptor))
    else:
        axes = geometry.bounds if geometry.kind == "box2d" else (geometry.bounds,)
        for k in range(1, count + 1):
            shrunk = []
            for lo, hi in axes:
                margin = (hi - lo) / 2 ** (k + 1)
                shrunk.append((lo + margin, hi - margin))
            if geometry.kind == "box2d":
                m = box_mask(geometry, *shrunk)
            else:
                m = interval_mask(geometry, *shrunk[0])
            masks.append(SubsetMask(geometry, m.flags & geometry.interior_mask, m.descriptor))

    for k, m in enumerate(masks):
        if m.is_empty or m.free_nodes().sum() == 0:
            raise ConfigurationError("geometry too coarse for the requested exhaustion",
                                     [("exhaustion.count", None, f"level {k + 1} has no free nodes")])
        if k and (not masks[k - 1].issubset(m) or masks[k - 1].count == m.count):
            raise ConfigurationError("geometry too coarse for the requested exhaustion",
                                     [("exhaustion.count", None,
                                       f"levels {k} and {k + 1} are not strictly nested")])
    return masks


def set_family(geometry: Geometry, strategy: Mapping) -> list:
    """
    Build a finite, duplicate-free family of compact masks.

    :param strategy: Mapping with ``strategy`` in ``balls`` (``centers`` x
        ``radii``), ``sublevel`` (``field`` node values or ``"distance"``,
        quantile ``levels``, ``side`` ``upper``/``lower``), ``annuli``
        (``pairs``) or ``explicit`` (``sets`` of descriptors).
    :raises ConfigurationError: On unknown strategies or an empty family.
    """
    kind = strategy.get("strategy")
    candidates = []
    if kind == "balls":
        for center in strategy.get("centers", []):
            for radius in strategy.get("radii", []):
                candidates.append(ball_mask(geometry, center, float(radius)))
    elif kind == "sublevel":
        values = strategy.get("field", "distance")
        if isinstance(values, str) and values == "distance":
            values = geometry.distance_to_boundary
        values = np.asarray(values, dtype=float)
        if values.shape != (geometry.n_nodes,):
            raise ConfigurationError("sublevel field must be a nodal field",
                                     [("family.field", None, f"got shape {values.shape}")])
        side = strategy.get("side", "upper")
        inner = values[geometry.interior_mask]
        for level in strategy.get("levels", []):
            t = float(np.quantile(inner, float(level)))
            flags = values >= t if side == "upper" else values <= t
            candidates.append(SubsetMask(geometry, flags, f"level({side}, q={float(level):g})"))
    elif kind == "annuli":
        for inner_r, outer_r in strategy.get("pairs", []):
            candidates.append(annulus_mask(geometry, float(inner_r), float(outer_r)))
    elif kind == "explicit":
        candidates = [mask_from_descriptor(geometry, d) for d in strategy.get("sets", [])]
    else:
        raise ConfigurationError(f"unknown family strategy {kind!r}",
                                 [("family.strategy", None,
                                   f"expected one of {', '.join(FAMILY_STRATEGIES)}")])
    return dedupe(geometry, candidates)


def dedupe(geometry, candidates: Iterable[SubsetMask]):
    """Drop empty and repeated sets after intersecting with the interior."""
    family, seen = [], set()
    for m in candidates:
        flags = m.flags & geometry.interior_mask
        if not flags.any():
            continue
        key = np.packbits(flags).tobytes()
        if key in seen:
            continue
        seen.add(key)
        family.append(SubsetMask(geometry, flags, m.descriptor))
    if not family:
        raise ConfigurationError("set family is empty",
                                 [("family", None, "no set contains an interior node")])
    return family


def level_sets(field_values: np.ndarray, geometry: Geometry, quantiles: Sequence[float]):
    """Superlevel sets ``{phi >= t}`` of a nonnegative nodal field at quantile levels."""
    values = np.abs(np.asarray(field_values, dtype=float))
    inner = values[geometry.interior_mask & (values > 0)]
    if inner.size == 0:
        return []
    masks = []
    for q in quantiles:
        t = float(np.quantile(inner, q))
        flags = (values >= t) & geometry.interior_mask
        masks.append(SubsetMask(geometry, flags, f"extremal-level(q={q:g})"))
    return masks


def require_compact(mask: SubsetMask, name="F"):
    if not mask.is_compact():
        raise DomainError(f"{name} ({mask.descriptor}) intersects the boundary")
