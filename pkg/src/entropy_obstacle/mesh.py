"""Uniform P1 meshes on intervals and rectangles, and calculus on grid functions.

Rectangles are split into right triangles along the (i, j) -> (i+1, j+1)
diagonal.  Nodes are numbered with x varying fastest.  Level-set measures use
lumped nodal volumes, so they are O(h) accurate.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "Mesh",
    "GridFunction",
    "LevelSetKind",
    "LevelSetQuery",
    "truncate",
    "truncate_values",
    "gradient",
    "integrate",
    "norm",
    "level_set_measure",
    "interpolate",
    "sup_error",
]


class Mesh:
    """Immutable uniform simplicial mesh of an interval or a rectangle."""

    def __init__(self, dim: int, extent, resolution):
        if dim == 1:
            (x0, x1) = map(float, extent)
            n = int(resolution if np.isscalar(resolution) else resolution[0])
            if n < 1 or not x1 > x0:
                raise ValueError("need at least one cell on a nonempty interval")
            self.extent = ((x0, x1),)
            self.resolution = (n,)
            nodes = np.linspace(x0, x1, n + 1)[:, None]
            elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
            boundary = np.array([0, n])
        elif dim == 2:
            (x0, x1), (y0, y1) = [tuple(map(float, e)) for e in extent]
            nx, ny = (int(resolution), int(resolution)) if np.isscalar(resolution) else map(int, resolution)
            if nx < 1 or ny < 1 or not (x1 > x0 and y1 > y0):
                raise ValueError("need at least one cell per axis on a nonempty rectangle")
            self.extent = ((x0, x1), (y0, y1))
            self.resolution = (nx, ny)
            X, Y = np.meshgrid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))
            nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
            i, j = np.meshgrid(np.arange(nx), np.arange(ny))
            ll = (j * (nx + 1) + i).ravel()
            lr, ul, ur = ll + 1, ll + nx + 1, ll + nx + 2
            elements = np.concatenate([np.stack([ll, lr, ur], 1), np.stack([ll, ur, ul], 1)])
            on_edge = (
                np.isclose(nodes[:, 0], x0) | np.isclose(nodes[:, 0], x1)
                | np.isclose(nodes[:, 1], y0) | np.isclose(nodes[:, 1], y1)
            )
            boundary = np.flatnonzero(on_edge)
        else:
            raise ValueError("only 1D and 2D meshes are supported")
        self.dim = dim
        self.nodes = nodes
        self.elements = elements.astype(np.int64)
        self.boundary_nodes = boundary.astype(np.int64)
        for arr in (self.nodes, self.elements, self.boundary_nodes):
            arr.flags.writeable = False
        self._build_geometry()

    @classmethod
    def interval(cls, x0: float = 0.0, x1: float = 1.0, n: int = 64) -> "Mesh":
        return cls(1, (x0, x1), n)

    @classmethod
    def rectangle(cls, xr=(0.0, 1.0), yr=(0.0, 1.0), n=64) -> "Mesh":
        return cls(2, (xr, yr), n)

    def _build_geometry(self):
        P = self.nodes[self.elements]  # (E, dim+1, dim)
        if self.dim == 1:
            length = P[:, 1, 0] - P[:, 0, 0]
            vol = length
            grads = np.stack([-1.0 / length, 1.0 / length], axis=1)[:, :, None]
        else:
            e1 = P[:, 1] - P[:, 0]
            e2 = P[:, 2] - P[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            vol = 0.5 * np.abs(det)
            # rows of inverse Jacobian transpose give gradients of barycentrics 1, 2
            g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
            g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
            grads = np.stack([-(g1 + g2), g1, g2], axis=1)
        if np.any(vol <= 0):
            raise ValueError("degenerate element")
        lumped = np.zeros(len(self.nodes))
        np.add.at(lumped, self.elements, (vol / (self.dim + 1))[:, None] * np.ones((1, self.dim + 1)))
        interior = np.ones(len(self.nodes), dtype=bool)
        interior[self.boundary_nodes] = False
        self.element_volume = vol
        self.basis_gradients = grads
        self.lumped_volume = lumped
        self.interior_mask = interior
        for arr in (vol, grads, lumped, interior):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> float:
        """Largest cell width along any axis."""
        return max((b - a) / n for (a, b), n in zip(self.extent, self.resolution))

    @property
    def measure(self) -> float:
        return float(math.prod(b - a for a, b in self.extent))

    @cached_property
    def node_elements(self):
        """CSR adjacency ``(offsets, element_ids, local_index)`` from nodes to elements."""
        E, k = self.elements.shape
        flat = self.elements.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        elem_ids = (order // k).astype(np.int64)
        local = (order % k).astype(np.int64)
        return offsets, elem_ids, local

    def same_as(self, other: "Mesh") -> bool:
        return (self.dim == other.dim and self.extent == other.extent
                and self.resolution == other.resolution)

    def to_dict(self) -> dict:
        ext = list(self.extent[0]) if self.dim == 1 else [list(e) for e in self.extent]
        res = self.resolution[0] if self.dim == 1 else list(self.resolution)
        return {"dim": self.dim, "extent": ext, "resolution": res}

    def __repr__(self):
        return f"Mesh(dim={self.dim}, extent={self.extent}, resolution={self.resolution})"


@dataclass(frozen=True)
class GridFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected {self.mesh.n_nodes} nodal values, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return GridFunction(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.mesh, self.values - _vals(other))

    def __mul__(self, c):
        return GridFunction(self.mesh, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.mesh, -self.values)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "value"] if self.mesh.dim == 1 else ["x", "y", "value"])
        for xy, v in zip(self.mesh.nodes, self.values):
            w.writerow([repr(float(c)) for c in xy] + [repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, mesh: Mesh, source) -> "GridFunction":
        """Read a CSV written by ``to_csv``; node coordinates must match ``mesh``."""
        if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
            with open(source, newline="") as fh:
                text = fh.read()
        else:
            text = source
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        expected = ["x", "value"] if mesh.dim == 1 else ["x", "y", "value"]
        if header != expected:
            raise ValueError(f"CSV header {header} does not match {expected}")
        data = np.array(body, dtype=float)
        if data.shape != (mesh.n_nodes, mesh.dim + 1):
            raise ValueError("CSV node count does not match mesh")
        if not np.allclose(data[:, :-1], mesh.nodes, rtol=0, atol=1e-12):
            raise ValueError("CSV node coordinates do not match mesh")
        return cls(mesh, data[:, -1])


def _vals(u):
    return u.values if isinstance(u, GridFunction) else u


def truncate_values(values, s: float) -> np.ndarray:
    if s < 0:
        raise ValueError("truncation level must be nonnegative")
    return np.clip(values, -s, s)


def truncate(u: GridFunction, s: float) -> GridFunction:
    return GridFunction(u.mesh, truncate_values(u.values, s))


def gradient(u: GridFunction) -> np.ndarray:
    """Element-wise constant gradient of the P1 interpolant, shape (E, dim)."""
    m = u.mesh
    return np.einsum("ek,ekd->ed", u.values[m.elements], m.basis_gradients)


def integrate(mesh: Mesh, values, where: str | None = None) -> float:
    """Integrate element-wise constants exactly, or nodal values by the vertex rule."""
    values = np.asarray(values, dtype=float)
    if where is None:
        if mesh.n_nodes == mesh.n_elements:
            raise ValueError("ambiguous integrand length; pass where='nodes' or 'elements'")
        where = "nodes" if len(values) == mesh.n_nodes else "elements"
    if where == "nodes":
        return float(mesh.lumped_volume @ values)
    if where == "elements":
        return float(mesh.element_volume @ values)
    raise ValueError(f"unknown integration target {where!r}")


def norm(u: GridFunction, kind: str = "Lp", exponent: float = 2.0) -> float:
    """``Lp``, ``W1q`` (exponent is q) or ``Linf`` norm of a grid function."""
    if kind == "Linf":
        return float(np.max(np.abs(u.values))) if len(u.values) else 0.0
    if exponent < 1:
        raise ValueError("norm exponent must be >= 1")
    q = float(exponent)
    total = integrate(u.mesh, np.abs(u.values) ** q, "nodes")
    if kind == "W1q":
        g = np.linalg.norm(gradient(u), axis=1)
        total += integrate(u.mesh, g**q, "elements")
    elif kind != "Lp":
        raise ValueError(f"unknown norm kind {kind!r}")
    return float(total ** (1.0 / q))


class LevelSetKind(str, enum.Enum):
    Below = "Below"
    Above = "Above"
    Band = "Band"


@dataclass(frozen=True)
class LevelSetQuery:
    """``Below``: {u < t}; ``Above``: {u > t}; ``Band``: {t <= u < s}.

    With ``absolute`` the predicate is applied to |u|.
    """

    t: float
    kind: LevelSetKind = LevelSetKind.Below
    s: float | None = None
    absolute: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", LevelSetKind(self.kind))
        if self.kind is LevelSetKind.Band:
            if self.s is None or self.t > self.s:
                raise ValueError("Band queries need t <= s")

    def mask(self, values) -> np.ndarray:
        v = np.abs(values) if self.absolute else np.asarray(values)
        if self.kind is LevelSetKind.Below:
            return v < self.t
        if self.kind is LevelSetKind.Above:
            return v > self.t
        return (v >= self.t) & (v < self.s)


def level_set_measure(u: GridFunction, query: LevelSetQuery) -> float:
    return float(u.mesh.lumped_volume[query.mask(u.values)].sum())


def interpolate(mesh: Mesh, func: Callable) -> GridFunction:
    """Nodal interpolant of ``func``, called as ``func(x)`` in 1D and ``func(x, y)`` in 2D."""
    cols = [mesh.nodes[:, d] for d in range(mesh.dim)]
    vals = np.broadcast_to(np.asarray(func(*cols), dtype=float), (mesh.n_nodes,))
    return GridFunction(mesh, vals)


def sup_error(u: GridFunction, exact: Callable, samples_per_edge: int = 4) -> float:
    """Sup over Omega of |I_h u - exact|, sampled on a barycentric lattice per element.

    Nodal values alone can be superconvergent, so interior points of every
    element are included (for quadratics the maximum sits at edge midpoints,
    which the lattice contains when ``samples_per_edge`` is even).
    """
    m = u.mesh
    k = samples_per_edge
    if m.dim == 1:
        lam = np.linspace(0.0, 1.0, k + 1)
        bary = np.stack([1.0 - lam, lam], axis=1)
    else:
        pts = [(i / k, j / k) for i in range(k + 1) for j in range(k + 1 - i)]
        bary = np.array([[1.0 - a - b, a, b] for a, b in pts])
    P = m.nodes[m.elements]  # (E, k, dim)
    X = np.einsum("sk,ekd->esd", bary, P)
    U = np.einsum("sk,ek->es", bary, u.values[m.elements])
    ex = exact(*[X[..., d] for d in range(m.dim)])
    return float(np.max(np.abs(U - ex)))
