"""Generalized-interpolation systems and their interpolants.

Three fitting modes share one symmetric positive definite block system

    [ A  B ] [c]   [f|_X]
    [ B^T C ] [d] = [ g  ]

where A is the Nd x Nd Gram matrix of the full kernel over the centers X
(diagonal kernel, so A is a scalar N x N Gram tensored with I_d), and the
boundary blocks depend on the mode:

* div-free-bc:  columns K_div(x_i, y_j) n_j and C_ij = n_i^T K_div(y_i,y_j) n_j;
  the divergence-free part of the fit then matches the boundary data g in the
  normal direction at every y_j.
* curl-free-bc: tangents t = (-n2, n1) replace the normals, K_curl replaces
  K_div, and the boundary right-hand side is zero, forcing the tangential
  component of the curl-free part to vanish (2D only).
* plain: no boundary block at all (M = 0).

Rows are node-major: row i*d + a is component a at center i.  Reordering
component-major exposes d identical N x N diagonal blocks, which the Schur
path exploits by factoring the scalar Gram once and the M x M complement
C - B^T A^{-1} B separately.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels as K
from .geometry import NodeSet
from .kernels import RadialProfile

__all__ = [
    "AssembledSystem",
    "Interpolant",
    "FullHHD",
    "SolverError",
    "assemble_divfree",
    "assemble_curlfree",
    "assemble_plain",
    "solve",
    "fit_divfree",
    "fit_curlfree",
    "fit_plain",
    "eval_interpolant",
    "eval_div_part",
    "eval_curl_part",
    "eval_potentials",
    "full_hhd",
]

_ASSEMBLY_CHUNK = 512

DIV_FREE_BC = "div-free-bc"
CURL_FREE_BC = "curl-free-bc"
PLAIN = "plain"


class SolverError(RuntimeError):
    """Factorization or consistency failure, with a remedial hint."""


@dataclass(frozen=True)
class AssembledSystem:
    """Blocks of the saddle system plus its right-hand side.

    a0 is the scalar N x N Gram of -lap(phi); the full A block is
    kron(a0, I_d) in node-major ordering.  b has shape (N*d, M), c (M, M).
    """

    kind: str
    a0: np.ndarray
    b: np.ndarray
    c: np.ndarray
    rhs: np.ndarray
    dim: int
    layout: str = "node-major rows: row i*d+a is component a at center i; boundary rows follow"

    @property
    def n(self) -> int:
        return self.a0.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def size(self) -> int:
        return self.n * self.dim + self.m

    @property
    def matrix(self) -> np.ndarray:
        """Materialize the full symmetric (Nd+M) x (Nd+M) matrix."""
        A = np.kron(self.a0, np.eye(self.dim))
        top = np.hstack([A, self.b])
        bottom = np.hstack([self.b.T, self.c])
        return np.vstack([top, bottom])


def _scalar_gram_chunked(p: RadialProfile, pts: np.ndarray) -> np.ndarray:
    n = pts.shape[0]
    out = np.empty((n, n))
    for lo in range(0, n, _ASSEMBLY_CHUNK):
        hi = min(lo + _ASSEMBLY_CHUNK, n)
        out[lo:hi] = K.scalar_gram(p, pts[lo:hi], pts)
    return out


def _check_samples(nodes: NodeSet, f_at_X) -> np.ndarray:
    f = np.asarray(f_at_X, dtype=float)
    if f.shape != (nodes.n_interior, nodes.dim):
        raise ValueError(
            f"need one d-vector per center: expected {(nodes.n_interior, nodes.dim)}, "
            f"got {f.shape}")
    return f


def assemble_divfree(nodes: NodeSet, p: RadialProfile, f_at_X, g_at_Y) -> AssembledSystem:
    """System enforcing full interpolation at X and n . (div part) = g at Y."""
    f = _check_samples(nodes, f_at_X)
    g = np.asarray(g_at_Y, dtype=float).reshape(-1)
    if g.shape[0] != nodes.n_boundary:
        raise ValueError(f"need one g value per boundary site, got {g.shape[0]}")
    _warn_if_unbalanced(nodes, g)
    a0 = _scalar_gram_chunked(p, nodes.interior)
    b = K.divfree_columns(p, nodes.interior, nodes.boundary, nodes.normals)
    c = K.divfree_bilinear(p, nodes.boundary, nodes.normals, nodes.boundary, nodes.normals)
    rhs = np.concatenate([f.ravel(), g])
    return AssembledSystem(kind=DIV_FREE_BC, a0=a0, b=b, c=c, rhs=rhs, dim=nodes.dim)


def assemble_curlfree(nodes: NodeSet, p: RadialProfile, f_at_X) -> AssembledSystem:
    """System enforcing full interpolation at X and t . (curl part) = 0 at Y.

    Only d=2 is supported: a 3D boundary would need two tangent functionals
    per site.
    """
    if nodes.dim != 2:
        raise NotImplementedError(
            "curl-free boundary conditions are implemented for d=2 only")
    f = _check_samples(nodes, f_at_X)
    t = nodes.tangents
    a0 = _scalar_gram_chunked(p, nodes.interior)
    b = K.curlfree_columns(p, nodes.interior, nodes.boundary, t)
    c = K.curlfree_bilinear(p, nodes.boundary, t, nodes.boundary, t)
    rhs = np.concatenate([f.ravel(), np.zeros(nodes.n_boundary)])
    return AssembledSystem(kind=CURL_FREE_BC, a0=a0, b=b, c=c, rhs=rhs, dim=nodes.dim)


def assemble_plain(nodes: NodeSet, p: RadialProfile, f_at_X) -> AssembledSystem:
    """Pure Gram system of the full kernel; no boundary conditions."""
    f = _check_samples(nodes, f_at_X)
    a0 = _scalar_gram_chunked(p, nodes.interior)
    nd = nodes.n_interior * nodes.dim
    return AssembledSystem(kind=PLAIN, a0=a0, b=np.zeros((nd, 0)),
                           c=np.zeros((0, 0)), rhs=f.ravel(), dim=nodes.dim)


def _warn_if_unbalanced(nodes: NodeSet, g: np.ndarray) -> None:
    """Warn when the boundary data has nonzero mean on some component.

    The decomposition being approximated requires integral g = 0 on each
    boundary component; the discrete system is solvable regardless, so a
    violation flags a modeling inconsistency rather than an error.  Uses
    closed-polygon trapezoid weights with sites ordered by angle about the
    component centroid.
    """
    if nodes.n_boundary == 0 or not np.any(g):
        return
    comps = nodes.components
    if comps is None:
        comps = np.zeros(nodes.n_boundary, dtype=int)
    for label in np.unique(comps):
        idx = np.flatnonzero(comps == label)
        pts = nodes.boundary[idx]
        if len(idx) < 3:
            continue
        ctr = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - ctr[1], pts[:, 0] - ctr[0]))
        ring = pts[order]
        gaps = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
        w = 0.5 * (gaps + np.roll(gaps, 1))
        gv = g[idx][order]
        total = float(w @ gv)
        norm = float(np.sqrt(w @ (gv * gv)))
        if norm > 0 and abs(total) >= 1e-6 * norm:
            warnings.warn(
                f"boundary data has nonzero mean {total:.3e} on component {label}; "
                "the decomposition it models requires zero mean there",
                stacklevel=3)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def _factor(mat: np.ndarray, what: str):
    try:
        return cho_factor(mat, lower=True, check_finite=False)
    except LinAlgError as exc:
        size = mat.shape[0]
        hint = 1e-10 * np.trace(mat) / size
        raise SolverError(
            f"Cholesky factorization of {what} failed ({exc}); smallest diagonal "
            f"entry {mat.diagonal().min():.3e}; consider jitter (about {hint:.1e})"
        ) from exc


class _ExtendedResidual:
    """Blockwise residual of the (possibly jittered) system, accumulated in
    the widest native float so refinement corrections carry real signal.

    On platforms where long double equals double this degrades gracefully
    to a fixed-precision residual.
    """

    def __init__(self, sys: AssembledSystem, jitter: float):
        self.sys = sys
        self.jitter = np.longdouble(jitter)
        self.a0 = sys.a0.astype(np.longdouble)
        self.b = sys.b.astype(np.longdouble) if sys.m else None
        self.c = sys.c.astype(np.longdouble) if sys.m else None
        self.rhs = sys.rhs.astype(np.longdouble)

    def __call__(self, c_mat: np.ndarray, d_vec: np.ndarray) -> np.ndarray:
        n, d, m = self.sys.n, self.sys.dim, self.sys.m
        C = c_mat.astype(np.longdouble)
        top = (self.a0 @ C + self.jitter * C).ravel()
        if m:
            dv = d_vec.astype(np.longdouble)
            top = top + self.b @ dv
            bottom = self.b.T @ C.ravel() + self.c @ dv + self.jitter * dv
            res = self.rhs - np.concatenate([top, bottom])
        else:
            res = self.rhs - top
        return res

    def relative_norm(self, c_mat: np.ndarray, d_vec: np.ndarray) -> float:
        res = np.linalg.norm(self(c_mat, d_vec).astype(float))
        denom = np.linalg.norm(self.sys.rhs)
        return float(res / denom) if denom > 0 else float(res)


def solve(sys: AssembledSystem, use_schur: bool = False, jitter: float = 0.0,
          refine: int = 1):
    """Solve the assembled system; returns (c, d, relative residual).

    c has shape (N, d), d shape (M,).  The Schur path factors the scalar
    Gram once, reuses it across the d components, and factors the M x M
    complement C - B^T A^{-1} B separately; it is much cheaper than the
    dense factorization for large N.

    refine counts iterative-refinement sweeps with the residual accumulated
    in extended precision; the default single sweep drives both paths to
    the stored system's solution, so they agree far beyond what two
    independent factorizations of an ill-conditioned kernel matrix would.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    n, d, m = sys.n, sys.dim, sys.m
    nd = n * d

    if use_schur:
        a = sys.a0 + jitter * np.eye(n) if jitter else sys.a0
        fac_a = _factor(a, "the interpolation Gram block")
        if m:
            B = sys.b.reshape(n, d * m)
            ainv_b = cho_solve(fac_a, B, check_finite=False).reshape(nd, m)
            S = sys.c - sys.b.T @ ainv_b
            if jitter:
                S = S + jitter * np.eye(m)
            fac_s = _factor(S, "the boundary Schur complement")

        def apply_inverse(vec):
            F = vec[:nd].reshape(n, d)
            ainv_f = cho_solve(fac_a, F, check_finite=False)
            if not m:
                return ainv_f, np.zeros(0)
            d_vec = cho_solve(fac_s, vec[nd:] - sys.b.T @ ainv_f.ravel(),
                              check_finite=False)
            c_mat = ainv_f - cho_solve(fac_a, (sys.b @ d_vec).reshape(n, d),
                                       check_finite=False)
            return c_mat, d_vec
    else:
        full = sys.matrix
        if jitter:
            full = full + jitter * np.eye(sys.size)
        fac = _factor(full, "the saddle matrix")

        def apply_inverse(vec):
            sol = cho_solve(fac, vec, check_finite=False)
            return sol[:nd].reshape(n, d), sol[nd:]

    c_mat, d_vec = apply_inverse(sys.rhs)
    residual = _ExtendedResidual(sys, jitter)
    for _ in range(refine):
        dc, dd = apply_inverse(residual(c_mat, d_vec).astype(float))
        c_mat = c_mat + dc
        d_vec = d_vec + dd
    return c_mat, d_vec, residual.relative_norm(c_mat, d_vec)


# ---------------------------------------------------------------------------
# interpolants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interpolant:
    """A fitted field s(x) = sum_j K(x, x_j)c_j + boundary terms.

    boundary_dirs holds outward normals (div-free-bc) or unit tangents
    (curl-free-bc); boundary terms use K_div or K_curl accordingly.
    Immutable after the solve; evaluation is pure.
    """

    kind: str
    centers: np.ndarray
    coeffs: np.ndarray
    boundary_centers: np.ndarray
    boundary_dirs: np.ndarray
    boundary_coeffs: np.ndarray
    profile: RadialProfile
    solve_residual: float

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _boundary_vectors(self) -> np.ndarray:
        return self.boundary_dirs * self.boundary_coeffs[:, None]

    def evaluate(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        out = K.apply_full(self.profile, P, self.centers, self.coeffs)
        if self.boundary_coeffs.size:
            W = self._boundary_vectors()
            if self.kind == DIV_FREE_BC:
                out += K.apply_divfree(self.profile, P, self.boundary_centers, W)
            else:
                out += K.apply_curlfree(self.profile, P, self.boundary_centers, W)
        return out[0] if single else out

    __call__ = evaluate

    def div_part(self, pts) -> np.ndarray:
        """The analytically divergence-free component of the fit."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        out = K.apply_divfree(self.profile, P, self.centers, self.coeffs)
        if self.kind == DIV_FREE_BC and self.boundary_coeffs.size:
            out += K.apply_divfree(self.profile, P, self.boundary_centers,
                                   self._boundary_vectors())
        return out[0] if single else out

    def curl_part(self, pts) -> np.ndarray:
        """The analytically curl-free component of the fit."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        out = K.apply_curlfree(self.profile, P, self.centers, self.coeffs)
        if self.kind == CURL_FREE_BC and self.boundary_coeffs.size:
            out += K.apply_curlfree(self.profile, P, self.boundary_centers,
                                    self._boundary_vectors())
        return out[0] if single else out

    def potentials(self, pts):
        """Stream function and velocity potential (psi, q) of the fit.

        curl(psi) reproduces div_part and grad(q) reproduces curl_part.  In
        2D psi is scalar, built from psi_j = -f1(r_j) (J v_j)^T w_j with J
        the 90-degree rotation; in 3D it is the vector f1(r_j) (v_j x w_j).
        q is -f1(r_j) v_j^T w_j in both.  Boundary centers contribute to the
        potential matching their kernel: div-free terms feed psi, curl-free
        terms feed q.
        """
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        div_centers = [self.centers]
        div_weights = [self.coeffs]
        curl_centers = [self.centers]
        curl_weights = [self.coeffs]
        if self.boundary_coeffs.size:
            W = self._boundary_vectors()
            if self.kind == DIV_FREE_BC:
                div_centers.append(self.boundary_centers)
                div_weights.append(W)
            elif self.kind == CURL_FREE_BC:
                curl_centers.append(self.boundary_centers)
                curl_weights.append(W)
        psi = _stream_sum(self.profile, P, np.vstack(div_centers), np.vstack(div_weights))
        q = _potential_sum(self.profile, P, np.vstack(curl_centers), np.vstack(curl_weights))
        if single:
            return psi[0], q[0]
        return psi, q


def _stream_sum(p: RadialProfile, pts, centers, weights, chunk: int = 512):
    d = pts.shape[1]
    if d == 2:
        out = np.empty(pts.shape[0])
    else:
        out = np.empty((pts.shape[0], 3))
    for lo in range(0, pts.shape[0], chunk):
        hi = min(lo + chunk, pts.shape[0])
        V = pts[lo:hi, None, :] - centers[None, :, :]
        r = p.eps * np.sqrt(np.einsum("ijk,ijk->ij", V, V))
        f1 = p.f1(r)
        if d == 2:
            # -f1 (Jv)^T w = f1 (v_y w_x - v_x w_y)
            out[lo:hi] = np.einsum(
                "ij,ij->i", f1, V[:, :, 1] * weights[None, :, 0]
                - V[:, :, 0] * weights[None, :, 1])
        else:
            out[lo:hi] = np.einsum("ij,ijk->ik", f1, np.cross(V, weights[None, :, :]))
    return out


def _potential_sum(p: RadialProfile, pts, centers, weights, chunk: int = 512):
    out = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], chunk):
        hi = min(lo + chunk, pts.shape[0])
        V = pts[lo:hi, None, :] - centers[None, :, :]
        r = p.eps * np.sqrt(np.einsum("ijk,ijk->ij", V, V))
        vw = np.einsum("ijk,jk->ij", V, weights)
        out[lo:hi] = -np.einsum("ij,ij->i", p.f1(r), vw)
    return out


def _build_interpolant(sys_kind: str, nodes: NodeSet, p: RadialProfile,
                       c_mat, d_vec, residual: float) -> Interpolant:
    if sys_kind == CURL_FREE_BC:
        dirs = nodes.tangents
    else:
        dirs = nodes.normals
    if sys_kind == PLAIN:
        boundary = np.zeros((0, nodes.dim))
        dirs = np.zeros((0, nodes.dim))
        d_vec = np.zeros(0)
    else:
        boundary = nodes.boundary
    return Interpolant(kind=sys_kind, centers=nodes.interior, coeffs=c_mat,
                       boundary_centers=boundary, boundary_dirs=dirs,
                       boundary_coeffs=d_vec, profile=p, solve_residual=residual)


def fit_divfree(nodes: NodeSet, p: RadialProfile, f_at_X, g_at_Y=None,
                use_schur: bool = False, jitter: float = 0.0) -> Interpolant:
    """Fit with divergence-free boundary conditions; g defaults to zero."""
    if g_at_Y is None:
        g_at_Y = np.zeros(nodes.n_boundary)
    sys = assemble_divfree(nodes, p, f_at_X, g_at_Y)
    c_mat, d_vec, res = solve(sys, use_schur=use_schur, jitter=jitter)
    return _build_interpolant(DIV_FREE_BC, nodes, p, c_mat, d_vec, res)


def fit_curlfree(nodes: NodeSet, p: RadialProfile, f_at_X,
                 use_schur: bool = False, jitter: float = 0.0) -> Interpolant:
    """Fit with curl-free boundary conditions (2D)."""
    sys = assemble_curlfree(nodes, p, f_at_X)
    c_mat, d_vec, res = solve(sys, use_schur=use_schur, jitter=jitter)
    return _build_interpolant(CURL_FREE_BC, nodes, p, c_mat, d_vec, res)


def fit_plain(nodes: NodeSet, p: RadialProfile, f_at_X,
              use_schur: bool = False, jitter: float = 0.0) -> Interpolant:
    """Fit without boundary conditions."""
    sys = assemble_plain(nodes, p, f_at_X)
    c_mat, d_vec, res = solve(sys, use_schur=use_schur, jitter=jitter)
    return _build_interpolant(PLAIN, nodes, p, c_mat, d_vec, res)


def eval_interpolant(it: Interpolant, x) -> np.ndarray:
    return it.evaluate(x)


def eval_div_part(it: Interpolant, x) -> np.ndarray:
    return it.div_part(x)


def eval_curl_part(it: Interpolant, x) -> np.ndarray:
    return it.curl_part(x)


def eval_potentials(it: Interpolant, x):
    return it.potentials(x)


# ---------------------------------------------------------------------------
# two-step full decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartView:
    """Callable view onto one analytic component of a fitted interpolant."""

    interpolant: Interpolant
    part: str  # "div" or "curl"

    def __call__(self, pts) -> np.ndarray:
        if self.part == "div":
            return self.interpolant.div_part(pts)
        return self.interpolant.curl_part(pts)


@dataclass(frozen=True)
class FullHHD:
    """Three-way split of a field: curl-free normal + tangent div-free + harmonic.

    normal_part is the curl-free component of the first (curl-free-bc) fit;
    leray_part and harmonic_part are the divergence-free and curl-free
    components of the second (div-free-bc, g=0) fit to the remainder.
    """

    normal_part: PartView
    leray_part: PartView
    harmonic_part: PartView
    step1: Interpolant
    step2: Interpolant
    sum_residual: float

    def parts_at(self, pts):
        return self.normal_part(pts), self.leray_part(pts), self.harmonic_part(pts)


def full_hhd(f: Union[Callable, np.ndarray], nodes: NodeSet, p: RadialProfile,
             use_schur: bool = False, jitter: float = 0.0) -> FullHHD:
    """Two-step full decomposition of f sampled at the centers (2D).

    Step one fits a curl-free-bc interpolant to f; its curl-free part is the
    boundary-normal gradient component.  Step two fits a div-free-bc
    interpolant (g = 0) to samples of step one's divergence-free part; its
    div-free part is the boundary-tangent divergence-free component and its
    curl-free part the harmonic remainder.  The three parts reproduce f at
    the centers up to the combined solve residuals.
    """
    if nodes.dim != 2:
        raise NotImplementedError("the two-step decomposition is implemented for d=2")
    X = nodes.interior
    f_at_X = f(X) if callable(f) else _check_samples(nodes, f)
    step1 = fit_curlfree(nodes, p, f_at_X, use_schur=use_schur, jitter=jitter)
    remainder = step1.div_part(X)
    step2 = fit_divfree(nodes, p, remainder, np.zeros(nodes.n_boundary),
                        use_schur=use_schur, jitter=jitter)
    total = step1.curl_part(X) + step2.evaluate(X)
    scale = np.abs(f_at_X).max()
    sum_residual = float(np.abs(total - f_at_X).max() / scale) if scale > 0 else 0.0
    if sum_residual > 1e-6:
        raise SolverError(
            f"two-step parts fail to reproduce the samples (residual {sum_residual:.3e})")
    return FullHHD(normal_part=PartView(step1, "curl"),
                   leray_part=PartView(step2, "div"),
                   harmonic_part=PartView(step2, "curl"),
                   step1=step1, step2=step2, sum_residual=sum_residual)
