"""Node sets, annulus-type domains, quasi-uniform node generation, mesh norms.

Interpolation centers X and boundary collocation sites Y are kept separate;
X may contain boundary-located points (the generator always includes the
boundary sites in X).  Boundary sites carry exact outward unit normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "NodeSet",
    "DomainSpec",
    "NodeFileError",
    "gen_domain_nodes",
    "spacing_for_count",
    "load_nodes",
    "emit_nodes",
    "estimate_mesh_norm",
]

_MIN_BOUNDARY_NODES = 16


class NodeFileError(ValueError):
    """Raised for malformed node files; message carries the line number."""


@dataclass(frozen=True)
class NodeSet:
    """Interpolation centers and boundary sites with outward unit normals.

    Attributes
    ----------
    interior : (N, d) array
        Interpolation centers X.  May include boundary-located points.
    boundary : (M, d) array
        Boundary sites Y; X and Y may intersect.
    normals : (M, d) array
        Outward unit normals at the boundary sites.
    components : (M,) int array, optional
        Boundary-component label per site (None when unknown).
    min_separation : float
        Duplicate threshold; pairwise distances within X and within Y must
        exceed it.
    """

    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    components: Optional[np.ndarray] = None
    min_separation: float = 1e-10

    def __post_init__(self):
        X = np.array(np.atleast_2d(np.asarray(self.interior, dtype=float)), copy=True)
        d = X.shape[1]
        if d not in (2, 3):
            raise ValueError(f"only d=2 or d=3 supported, got d={d}")
        Y = np.array(np.asarray(self.boundary, dtype=float).reshape(-1, d), copy=True)
        Nm = np.array(np.asarray(self.normals, dtype=float).reshape(-1, d), copy=True)
        if Y.shape != Nm.shape:
            raise ValueError("boundary points and normals must align")
        if X.shape[0] == 0:
            raise ValueError("empty interpolation set")
        lengths = np.linalg.norm(Nm, axis=1)
        if Y.shape[0] and np.any(np.abs(lengths - 1.0) > 1e-12):
            raise ValueError("normals must be unit vectors (|n| within 1e-12 of 1)")
        comps = self.components
        if comps is not None:
            comps = np.array(comps, dtype=int, copy=True)
            if comps.shape != (Y.shape[0],):
                raise ValueError("component labels must match boundary size")
            comps.flags.writeable = False
        for label, pts in (("interior", X), ("boundary", Y)):
            if pts.shape[0] > 1:
                tree = cKDTree(pts)
                pairs = tree.query_pairs(self.min_separation)
                if pairs:
                    i, j = sorted(pairs)[0]
                    raise ValueError(
                        f"duplicate {label} nodes {i} and {j} "
                        f"(separation below {self.min_separation:g})")
        for arr in (X, Y, Nm):
            arr.flags.writeable = False
        object.__setattr__(self, "interior", X)
        object.__setattr__(self, "boundary", Y)
        object.__setattr__(self, "normals", Nm)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.interior.shape[1]

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    @property
    def tangents(self) -> np.ndarray:
        """Unit tangents t = (-n2, n1) at the boundary sites (2D only)."""
        if self.dim != 2:
            raise ValueError("tangent construction is defined for d=2 only")
        n = self.normals
        return np.column_stack([-n[:, 1], n[:, 0]])


@dataclass(frozen=True)
class DomainSpec:
    """Annulus-type domain: inner circle plus an outer circle or wavy curve.

    The outer boundary is r(theta) = outer + amplitude*cos(waves*theta);
    amplitude 0 gives the plain annulus.
    """

    kind: str
    inner: float
    outer: float
    amplitude: float = 0.0
    waves: int = 0

    def __post_init__(self):
        if self.kind not in ("annulus", "wavy-annulus"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.inner <= 0:
            raise ValueError("inner radius must be positive")
        if self.outer <= self.inner + 2.0 * abs(self.amplitude):
            raise ValueError("outer radius must exceed inner + 2*amplitude")
        if self.kind == "annulus" and self.amplitude != 0.0:
            raise ValueError("annulus takes amplitude 0")
        if self.kind == "wavy-annulus" and (self.amplitude == 0.0 or self.waves < 1):
            raise ValueError("wavy-annulus needs amplitude != 0 and waves >= 1")

    def outer_radius(self, theta):
        return self.outer + self.amplitude * np.cos(self.waves * np.asarray(theta))

    def ring_radius(self, theta, s):
        """Radius of the blended ring at fraction s in [0, 1] (0=inner, 1=outer)."""
        return (1.0 - s) * self.inner + s * self.outer_radius(theta)

    def area(self) -> float:
        # (1/2) int rho^2 dtheta for the outer curve minus the inner disk
        return math.pi * (self.outer**2 + 0.5 * self.amplitude**2 - self.inner**2)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        rad = np.linalg.norm(pts, axis=1)
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        return (rad >= self.inner) & (rad <= self.outer_radius(theta))


def standard_annulus() -> DomainSpec:
    """The annulus used by the shipped experiments: radii 0.75 and 2."""
    return DomainSpec("annulus", inner=0.75, outer=2.0)


def standard_wavy_annulus() -> DomainSpec:
    """Multiply connected test domain: r_outer = 2 + 0.2*cos(5*theta), inner 0.75."""
    return DomainSpec("wavy-annulus", inner=0.75, outer=2.0, amplitude=0.2, waves=5)


# ---------------------------------------------------------------------------
# ring machinery
# ---------------------------------------------------------------------------

_DENSE = 4096  # theta samples used for arclength tables of one ring


def _ring_points(spec: DomainSpec, s: float, count: int, offset: float) -> np.ndarray:
    """count points equispaced in arclength on the blended ring at fraction s.

    offset shifts all points by offset*spacing along the ring; it staggers
    consecutive rings so nodes do not align radially.
    """
    theta = np.linspace(0.0, 2.0 * math.pi, _DENSE + 1)
    rho = np.asarray(spec.ring_radius(theta, s), dtype=float)
    drho = s * (-spec.amplitude * spec.waves * np.sin(spec.waves * theta))
    speed = np.sqrt(rho * rho + drho * drho)
    seg = 0.5 * (speed[1:] + speed[:-1]) * (theta[1] - theta[0])
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    targets = (np.arange(count) + offset) * (total / count)
    th = np.interp(np.mod(targets, total), arc, theta)
    r = spec.ring_radius(th, s)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def _ring_length(spec: DomainSpec, s: float) -> float:
    theta = np.linspace(0.0, 2.0 * math.pi, _DENSE + 1)
    rho = np.asarray(spec.ring_radius(theta, s), dtype=float)
    drho = s * (-spec.amplitude * spec.waves * np.sin(spec.waves * theta))
    speed = np.sqrt(rho * rho + drho * drho)
    return float(np.trapezoid(speed, theta))


def _outer_normals(spec: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """Exact outward unit normals of the parametric outer boundary."""
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    rho = spec.outer_radius(theta)
    drho = -spec.amplitude * spec.waves * np.sin(spec.waves * theta)
    # CCW tangent (rho'cos - rho sin, rho'sin + rho cos); outward = (t_y, -t_x)
    tx = drho * np.cos(theta) - rho * np.sin(theta)
    ty = drho * np.sin(theta) + rho * np.cos(theta)
    n = np.column_stack([ty, -tx])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def gen_domain_nodes(spec: DomainSpec, h_target: float) -> NodeSet:
    """Deterministic quasi-uniform nodes with spacing about h_target.

    Boundary sites sit equispaced in arclength on each boundary component
    with exact outward normals.  Interpolation centers consist of the
    boundary sites plus staggered rings between the two boundary curves,
    with ring gap and in-ring spacing about h_target.  The construction has
    no random element, so repeated calls are bit-identical.
    """
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    inner_len = 2.0 * math.pi * spec.inner
    outer_len = _ring_length(spec, 1.0)
    m_inner = int(round(inner_len / h_target))
    m_outer = int(round(outer_len / h_target))
    if min(m_inner, m_outer) < _MIN_BOUNDARY_NODES:
        raise ValueError(
            f"h_target={h_target:g} yields under {_MIN_BOUNDARY_NODES} boundary "
            "nodes on a component; decrease it")

    outer_pts = _ring_points(spec, 1.0, m_outer, 0.0)
    # snap the plain annulus to the exact radius (arclength inversion is
    # exact there anyway, this removes quadrature rounding)
    if spec.kind == "annulus":
        outer_pts *= spec.outer / np.linalg.norm(outer_pts, axis=1, keepdims=True)
    inner_pts = _ring_points(spec, 0.0, m_inner, 0.0)
    inner_pts *= spec.inner / np.linalg.norm(inner_pts, axis=1, keepdims=True)

    outer_nrm = _outer_normals(spec, outer_pts)
    inner_nrm = -inner_pts / np.linalg.norm(inner_pts, axis=1, keepdims=True)

    Y = np.vstack([outer_pts, inner_pts])
    normals = np.vstack([outer_nrm, inner_nrm])
    comps = np.concatenate([np.zeros(m_outer, dtype=int), np.ones(m_inner, dtype=int)])

    rings = []
    n_gap = max(2, int(round((spec.outer - spec.inner) / h_target)))
    for k in range(1, n_gap):
        s = k / n_gap
        length = _ring_length(spec, s)
        count = max(8, int(round(length / h_target)))
        rings.append(_ring_points(spec, s, count, 0.5 * (k % 2)))
    interior = np.vstack([Y] + rings) if rings else Y.copy()

    return NodeSet(interior=interior, boundary=Y, normals=normals, components=comps)


def spacing_for_count(spec: DomainSpec, n_target: int) -> float:
    """Spacing h such that gen_domain_nodes yields about n_target centers."""
    if n_target < 50:
        raise ValueError("n_target too small for the ring generator")
    h = math.sqrt(spec.area() / n_target)
    for _ in range(3):
        n = gen_domain_nodes(spec, h).n_interior
        h *= math.sqrt(n / n_target)
    return h


# ---------------------------------------------------------------------------
# node file format
# ---------------------------------------------------------------------------

def load_nodes(path) -> NodeSet:
    """Read a node set from the plain-text format written by emit_nodes.

    Format: optional ``#`` comment lines; an ``INTERIOR`` line followed by
    one ``x y [z]`` row per center; an optional ``BOUNDARY`` line followed by
    one ``x y [z] nx ny [nz]`` row per site.  The dimension is inferred from
    the column count and must be consistent.  Normals within 1e-6 of unit
    length are renormalized, anything further off is rejected.
    """
    interior, boundary, normals = [], [], []
    section = None
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "INTERIOR":
                section = "interior"
                continue
            if line == "BOUNDARY":
                section = "boundary"
                continue
            if section is None:
                raise NodeFileError(f"{path}:{lineno}: data before a section header")
            try:
                vals = [float(tok) for tok in line.split()]
            except ValueError:
                raise NodeFileError(f"{path}:{lineno}: unparsable row {line!r}") from None
            if section == "interior":
                if len(vals) not in (2, 3):
                    raise NodeFileError(
                        f"{path}:{lineno}: interior row needs 2 or 3 columns, got {len(vals)}")
                row_dim = len(vals)
                if dim is None:
                    dim = row_dim
                elif row_dim != dim:
                    raise NodeFileError(
                        f"{path}:{lineno}: inconsistent dimension ({row_dim} vs {dim})")
                interior.append(vals)
            else:
                if len(vals) not in (4, 6):
                    raise NodeFileError(
                        f"{path}:{lineno}: boundary row needs 4 or 6 columns, got {len(vals)}")
                row_dim = len(vals) // 2
                if dim is None:
                    dim = row_dim
                elif row_dim != dim:
                    raise NodeFileError(
                        f"{path}:{lineno}: inconsistent dimension ({row_dim} vs {dim})")
                n = np.asarray(vals[row_dim:], dtype=float)
                length = float(np.linalg.norm(n))
                if abs(length - 1.0) > 1e-6:
                    raise NodeFileError(
                        f"{path}:{lineno}: normal has length {length:.8f}, not unit")
                if abs(length - 1.0) > 1e-12:
                    n = n / length
                boundary.append(vals[:row_dim])
                normals.append(n.tolist())
    if not interior:
        raise NodeFileError(f"{path}: no interior nodes found")
    X = np.asarray(interior, dtype=float)
    Y = np.asarray(boundary, dtype=float).reshape(-1, X.shape[1])
    Nm = np.asarray(normals, dtype=float).reshape(-1, X.shape[1])
    try:
        return NodeSet(interior=X, boundary=Y, normals=Nm)
    except ValueError as exc:
        raise NodeFileError(f"{path}: {exc}") from exc


def emit_nodes(nodes: NodeSet, path) -> None:
    """Write the text format read by load_nodes; round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# hhdkit node set\n")
        fh.write("INTERIOR\n")
        for row in nodes.interior:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write("BOUNDARY\n")
        for pt, n in zip(nodes.boundary, nodes.normals):
            vals = list(pt) + list(n)
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


# ---------------------------------------------------------------------------
# mesh norm
# ---------------------------------------------------------------------------

def _pow2_at_least(x: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(1.0, x))))


def estimate_mesh_norm(nodes: NodeSet, spec: DomainSpec, probe_density: float) -> float:
    """Fill distance of the centers: max over domain probes of the distance
    to the nearest center.

    probe_density is the linear probe density (probes per unit length along
    rings and radially).  Probe counts are rounded up to powers of two so
    that doubling the density yields a superset of probes; the estimate is
    therefore monotone under refinement.
    """
    if nodes.n_interior == 0:
        raise ValueError("empty node set")
    if probe_density <= 0:
        raise ValueError("probe_density must be positive")
    width = spec.outer + abs(spec.amplitude) - spec.inner
    n_s = _pow2_at_least(width * probe_density)
    tree = cKDTree(nodes.interior)
    worst = 0.0
    for j in range(n_s + 1):
        s = j / n_s
        length = _ring_length(spec, s)
        m = _pow2_at_least(max(8.0, length * probe_density))
        theta = 2.0 * math.pi * np.arange(m) / m
        r = spec.ring_radius(theta, s)
        probes = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        dist, _ = tree.query(probes)
        worst = max(worst, float(dist.max()))
    return worst
