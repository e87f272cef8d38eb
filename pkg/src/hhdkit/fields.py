"""Analytic test fields and tabulated sample fields.

The shipped target is a divergence-free swirl plus the gradient of the
classic two-dimensional "peaks" surface

    p(x, y) = 3(1-x)^2 e^{-x^2-(y+1)^2} - 10(x/5 - x^3 - y^5) e^{-x^2-y^2}
              - (1/3) e^{-(x+1)^2-y^2}.

The swirl is curl(cos(2(x^2+y^2))) with the scalar-curl convention
curl(f) = (-df/dy, df/dx); its streamlines are circles about the origin, so
on circular boundaries it is exactly tangent and coincides with the
divergence-free, boundary-tangent term of the field's decomposition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

__all__ = [
    "VectorField",
    "MissingSampleError",
    "peaks",
    "peaks_gradient",
    "annulus_target",
    "annulus_leray_exact",
    "annulus_gradient_part",
    "sampled_field",
    "read_samples",
    "write_samples",
]


class MissingSampleError(KeyError):
    """A sampled field was queried at a point absent from its table."""


@dataclass(frozen=True)
class VectorField:
    """Callable point -> d-vector wrapper with optional exact contracts.

    func must accept an (n, d) array and return (n, d).  divergence / curl,
    when given, are exact closed forms used only for testing.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim: int = 2
    divergence: Optional[Callable[[np.ndarray], np.ndarray]] = None
    curl: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        out = self.func(np.atleast_2d(pts))
        return out[0] if single else out


def peaks(x, y):
    """The peaks surface, vectorized over matching array arguments."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e1 = np.exp(-x**2 - (y + 1.0) ** 2)
    e2 = np.exp(-x**2 - y**2)
    e3 = np.exp(-((x + 1.0) ** 2) - y**2)
    return 3.0 * (1.0 - x) ** 2 * e1 - 10.0 * (x / 5.0 - x**3 - y**5) * e2 - e3 / 3.0


def peaks_gradient(x, y):
    """Closed-form gradient of peaks; returns (px, py) arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e1 = np.exp(-x**2 - (y + 1.0) ** 2)
    e2 = np.exp(-x**2 - y**2)
    e3 = np.exp(-((x + 1.0) ** 2) - y**2)
    g = x / 5.0 - x**3 - y**5
    px = (-6.0 * (1.0 - x) - 6.0 * x * (1.0 - x) ** 2) * e1 \
        - 10.0 * (0.2 - 3.0 * x**2 - 2.0 * x * g) * e2 \
        + (2.0 / 3.0) * (x + 1.0) * e3
    py = -6.0 * (y + 1.0) * (1.0 - x) ** 2 * e1 \
        - 10.0 * (-5.0 * y**4 - 2.0 * y * g) * e2 \
        + (2.0 / 3.0) * y * e3
    return px, py


def annulus_leray_exact(pts) -> np.ndarray:
    """curl(cos(2(x^2+y^2))) = (4y sin(2|x|^2), -4x sin(2|x|^2)).

    Divergence-free and tangent to every circle about the origin, hence the
    exact boundary-tangent divergence-free term of annulus_target on the
    annulus.
    """
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    P = np.atleast_2d(pts)
    s = np.sin(2.0 * (P[:, 0] ** 2 + P[:, 1] ** 2))
    out = np.column_stack([4.0 * P[:, 1] * s, -4.0 * P[:, 0] * s])
    return out[0] if single else out


def annulus_gradient_part(pts) -> np.ndarray:
    """The curl-free term of annulus_target: the gradient of peaks."""
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    P = np.atleast_2d(pts)
    px, py = peaks_gradient(P[:, 0], P[:, 1])
    out = np.column_stack([px, py])
    return out[0] if single else out


def annulus_target(pts) -> np.ndarray:
    """Target field: curl(cos(2(x^2+y^2))) plus the gradient of peaks."""
    return annulus_leray_exact(pts) + annulus_gradient_part(pts)


def target_field() -> VectorField:
    return VectorField(annulus_target, dim=2)


def leray_field() -> VectorField:
    return VectorField(annulus_leray_exact, dim=2)


# ---------------------------------------------------------------------------
# tabulated fields
# ---------------------------------------------------------------------------

def _key(point) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(point, dtype=float))


@dataclass(frozen=True)
class SampledField:
    """Exact-lookup field over a fixed point table; no interpolation."""

    table: Dict[Tuple[float, ...], Tuple[float, ...]]
    dim: int

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        pts2 = np.atleast_2d(pts)
        out = np.empty_like(pts2)
        for i, row in enumerate(pts2):
            key = _key(row)
            if key not in self.table:
                raise MissingSampleError(f"no sample at point {key}")
            out[i] = self.table[key]
        return out[0] if single else out

    @property
    def points(self) -> np.ndarray:
        return np.asarray(list(self.table.keys()), dtype=float)


def sampled_field(values: Dict) -> SampledField:
    """Wrap a {point: vector} table as an exact-lookup field."""
    if not values:
        raise ValueError("empty sample table")
    table = {}
    dim = None
    for point, vec in values.items():
        key = _key(point)
        if dim is None:
            dim = len(key)
        if len(key) != dim or len(vec) != dim:
            raise ValueError(f"inconsistent dimension at point {key}")
        table[key] = tuple(float(v) for v in vec)
    return SampledField(table=table, dim=dim)


def read_samples(path) -> SampledField:
    """Read a sample CSV (header x,y[,z],fx,fy[,fz]) into a SampledField."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header == ["x", "y", "fx", "fy"]:
            dim = 2
        elif header == ["x", "y", "z", "fx", "fy", "fz"]:
            dim = 3
        else:
            raise ValueError(f"{path}: unrecognized sample header {header}")
        table = {}
        for row in reader:
            if not row:
                continue
            vals = [float(tok) for tok in row]
            table[tuple(vals[:dim])] = tuple(vals[dim:])
    return sampled_field(table)


def write_samples(field: SampledField, path) -> None:
    """Write a SampledField to the sample CSV format; round-trips exactly."""
    cols = (["x", "y", "z"][: field.dim]) + (["fx", "fy", "fz"][: field.dim])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for point, vec in field.table.items():
            writer.writerow([repr(v) for v in point] + [repr(v) for v in vec])
