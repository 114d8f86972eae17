"""Constant-negative-curvature geometry: Poincaré ball and Lorentz models.

Both models of hyperbolic space are implemented for a general curvature
``c < 0`` together with their distances, exponential/logarithmic maps,
parallel transport, and the diffeomorphisms converting between them.  A flat
``euclidean`` mode is included so inner-product baselines run through the
same code path.

Conventions
-----------
* Poincaré ball: open ball of radius ``1/sqrt(|c|)``; the conformal factor at
  ``x`` is ``2 / (1 + c*||x||^2)``.
* Lorentz (hyperboloid): points ``x`` in R^(n+1) with ``<x,x>_L = 1/c`` and
  ``x[0] > 0``, where ``<x,y>_L = -x0*y0 + sum_i xi*yi``.
* All arithmetic is done in 64-bit floats; inputs are promoted on entry.

Every function here is pure; there is no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff
from .errors import ContractViolationError

# Margin keeping projected points off the ball boundary / arcosh singularity.
BOUNDARY_EPS = 1e-5
# Manifold membership tolerance for Lorentz points and tangent vectors.
ON_MANIFOLD_TOL = 1e-6


class Geometry(str, Enum):
    POINCARE = "poincare"
    LORENTZ = "lorentz"
    EUCLIDEAN = "euclidean"

    @property
    def hyperbolic(self) -> bool:
        return self is not Geometry.EUCLIDEAN


@dataclass(frozen=True)
class Curvature:
    """Strictly negative sectional curvature of the hyperbolic space."""

    c: float

    def __post_init__(self):
        if not np.isfinite(self.c) or self.c >= 0:
            raise ContractViolationError(f"curvature must be finite and < 0, got {self.c}")

    @property
    def k(self) -> float:
        """Absolute curvature ``|c|``."""
        return -self.c

    @property
    def radius(self) -> float:
        """Radius of the Poincaré domain, ``1/sqrt(|c|)``."""
        return 1.0 / np.sqrt(self.k)


def _as_vector(coords) -> np.ndarray:
    a = np.asarray(coords, dtype=np.float64)
    if a.ndim != 1:
        raise ContractViolationError(f"expected a 1-d coordinate vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolationError("coordinates must be finite")
    return a


@dataclass(frozen=True, eq=False)
class HyperPoint:
    """A point on one of the supported manifolds.

    ``coords`` has length ``n`` for poincare/euclidean and ``n+1`` for
    lorentz.  ``curvature`` is required for the hyperbolic geometries and
    must be absent in euclidean mode.
    """

    geometry: Geometry
    coords: np.ndarray
    curvature: Curvature | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_vector(self.coords))
        geom = Geometry(self.geometry)
        object.__setattr__(self, "geometry", geom)
        if geom is Geometry.EUCLIDEAN:
            if self.curvature is not None:
                raise ContractViolationError("euclidean points carry no curvature")
            return
        if self.curvature is None:
            raise ContractViolationError(f"{geom.value} points require a curvature")
        if geom is Geometry.POINCARE:
            if np.linalg.norm(self.coords) >= self.curvature.radius:
                raise ContractViolationError(
                    "poincare point lies on or outside the ball of radius "
                    f"{self.curvature.radius:g}"
                )
        else:
            if self.coords.size < 2:
                raise ContractViolationError("lorentz coordinates need length >= 2")
            if self.coords[0] <= 0:
                raise ContractViolationError("lorentz point must have positive time coordinate")
            res = lorentz_inner(self.coords, self.coords) - 1.0 / self.curvature.c
            if abs(res) > ON_MANIFOLD_TOL * max(1.0, abs(1.0 / self.curvature.c)):
                raise ContractViolationError(
                    f"lorentz point violates <x,x>_L = 1/c by {res:.3g}"
                )

    @property
    def dim(self) -> int:
        """Manifold dimension (one less than len(coords) for lorentz)."""
        n = self.coords.size
        return n - 1 if self.geometry is Geometry.LORENTZ else n


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector in the tangent space at ``at``."""

    at: HyperPoint
    vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vec", _as_vector(self.vec))
        if self.vec.size != self.at.coords.size:
            raise ContractViolationError("tangent vector length must match its base point")
        if self.at.geometry is Geometry.LORENTZ:
            res = lorentz_inner(self.at.coords, self.vec)
            scale = max(1.0, float(np.linalg.norm(self.vec)))
            if abs(res) > ON_MANIFOLD_TOL * scale:
                raise ContractViolationError(f"lorentz tangency violated by {res:.3g}")


def _check_pair(x: HyperPoint, y: HyperPoint):
    if x.geometry is not y.geometry:
        raise ContractViolationError(
            f"geometry mismatch: {x.geometry.value} vs {y.geometry.value}"
        )
    if x.coords.size != y.coords.size:
        raise ContractViolationError(
            f"dimension mismatch: {x.coords.size} vs {y.coords.size}"
        )
    if x.curvature != y.curvature:
        raise ContractViolationError("curvature mismatch")


# ---------------------------------------------------------------------------
# Array-level kernels.  These operate on plain ndarrays with rows as points
# and are the workhorses behind the HyperPoint API and the batch helpers.
# ---------------------------------------------------------------------------

def lorentz_inner(x, y) -> float | np.ndarray:
    """Minkowski bilinear form ``-x0*y0 + sum_{i>=1} xi*yi``.

    Accepts vectors or arrays of row vectors; lengths must match and be >= 2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ContractViolationError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise ContractViolationError("lorentz inner product needs length >= 2")
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def _arcosh(arg):
    # Rounding can push near-coincident arguments infinitesimally below 1;
    # clamping at exactly 1 keeps d(x, x) == 0.
    return np.arccosh(np.maximum(arg, 1.0))


def poincare_distance_arrays(x, y, c: float):
    """Poincaré distance between broadcastable arrays of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    k = -c
    sq = np.sum((x - y) ** 2, axis=-1)
    denom = (1.0 - k * np.sum(x * x, axis=-1)) * (1.0 - k * np.sum(y * y, axis=-1))
    arg = 1.0 + 2.0 * k * sq / denom
    return _arcosh(arg) / np.sqrt(k)


def lorentz_distance_arrays(x, y, c: float):
    """Lorentz distance between broadcastable arrays of row vectors."""
    k = -c
    return _arcosh(c * lorentz_inner(x, y)) / np.sqrt(k)


def pairwise_distances(x: np.ndarray, y: np.ndarray, geometry: Geometry, c: float | None):
    """All-pairs distance matrix (rows of ``x`` against rows of ``y``)."""
    geometry = Geometry(geometry)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if geometry is Geometry.EUCLIDEAN:
        sq = (
            np.sum(x * x, axis=1)[:, None]
            + np.sum(y * y, axis=1)[None, :]
            - 2.0 * x @ y.T
        )
        return np.sqrt(np.maximum(sq, 0.0))
    if geometry is Geometry.POINCARE:
        return poincare_distance_arrays(x[:, None, :], y[None, :, :], c)
    return lorentz_distance_arrays(x[:, None, :], y[None, :, :], c)


def pairwise_scores(x: np.ndarray, y: np.ndarray, geometry: Geometry, c: float | None):
    """All-pairs similarity scores: negated distance, or dot products in flat mode."""
    geometry = Geometry(geometry)
    if geometry is Geometry.EUCLIDEAN:
        return np.asarray(x, dtype=np.float64) @ np.asarray(y, dtype=np.float64).T
    return -pairwise_distances(x, y, geometry, c)


def exp_map_origin_arrays(tangents: np.ndarray, geometry: Geometry, c: float | None):
    """Map rows of tangent vectors at the origin onto the manifold.

    Euclidean mode is the identity.  Lorentz inputs are the ``n`` spatial
    tangent coordinates at the base point ``(radius, 0, ..., 0)``; the output
    gains the leading time coordinate.
    """
    geometry = Geometry(geometry)
    t = np.asarray(tangents, dtype=np.float64)
    if geometry is Geometry.EUCLIDEAN:
        return t.copy()
    k = -c
    nrm = np.linalg.norm(t, axis=-1, keepdims=True)
    safe = np.maximum(nrm, 1e-300)
    if geometry is Geometry.POINCARE:
        # exp_0(v) = tanh(sqrt(k)*||v||) * v / (sqrt(k)*||v||)
        scale = np.tanh(np.sqrt(k) * nrm) / (np.sqrt(k) * safe)
        return t * scale
    # Lorentz: tangent (0, v) at (R, 0, ...); ||(0, v)||_L = ||v||.
    x0 = np.cosh(np.sqrt(k) * nrm[..., 0]) / np.sqrt(k)
    spatial = t * (np.sinh(np.sqrt(k) * nrm) / (np.sqrt(k) * safe))
    return np.concatenate([x0[..., None], spatial], axis=-1)


def log_map_origin_arrays(points: np.ndarray, geometry: Geometry, c: float | None):
    """Inverse of :func:`exp_map_origin_arrays` (rows of on-manifold points)."""
    geometry = Geometry(geometry)
    p = np.asarray(points, dtype=np.float64)
    if geometry is Geometry.EUCLIDEAN:
        return p.copy()
    k = -c
    if geometry is Geometry.POINCARE:
        nrm = np.linalg.norm(p, axis=-1, keepdims=True)
        safe = np.maximum(nrm, 1e-300)
        scale = np.arctanh(np.minimum(np.sqrt(k) * nrm, 1.0 - 1e-15)) / (np.sqrt(k) * safe)
        return p * scale
    spatial = p[..., 1:]
    nrm = np.linalg.norm(spatial, axis=-1, keepdims=True)
    safe = np.maximum(nrm, 1e-300)
    # distance from origin: arcosh(sqrt(k) * x0) / sqrt(k)
    d = _arcosh(np.sqrt(k) * p[..., :1]) / np.sqrt(k)
    return spatial * (d / safe)


# ---------------------------------------------------------------------------
# Point-level API.
# ---------------------------------------------------------------------------

def origin(geometry: Geometry, dim: int, curvature: Curvature | None = None) -> HyperPoint:
    """The canonical base point: zero vector, or ``(radius, 0, ...)`` for lorentz."""
    geometry = Geometry(geometry)
    if geometry is Geometry.LORENTZ:
        coords = np.zeros(dim + 1)
        coords[0] = curvature.radius
        return HyperPoint(geometry, coords, curvature)
    if geometry is Geometry.EUCLIDEAN:
        return HyperPoint(geometry, np.zeros(dim))
    return HyperPoint(geometry, np.zeros(dim), curvature)


def distance(x: HyperPoint, y: HyperPoint) -> float:
    """Geodesic distance between two points of the same geometry."""
    _check_pair(x, y)
    if x.geometry is Geometry.EUCLIDEAN:
        return float(np.linalg.norm(x.coords - y.coords))
    if x.geometry is Geometry.POINCARE:
        return float(poincare_distance_arrays(x.coords, y.coords, x.curvature.c))
    return float(lorentz_distance_arrays(x.coords, y.coords, x.curvature.c))


def similarity_score(x: HyperPoint, y: HyperPoint) -> float:
    """Negated distance for hyperbolic geometries; dot product in euclidean mode."""
    _check_pair(x, y)
    if x.geometry is Geometry.EUCLIDEAN:
        return float(np.dot(x.coords, y.coords))
    return -distance(x, y)


def conformal_factor(x: HyperPoint) -> float:
    """Poincaré conformal factor ``2 / (1 + c*||x||^2)``."""
    if x.geometry is not Geometry.POINCARE:
        raise ContractViolationError("conformal factor is defined for poincare points only")
    return float(2.0 / (1.0 + x.curvature.c * np.dot(x.coords, x.coords)))


def _mobius_add_raw(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    xy = np.dot(x, y)
    x2 = np.dot(x, x)
    y2 = np.dot(y, y)
    num = (1.0 + 2.0 * k * xy + k * y2) * x + (1.0 - k * x2) * y
    den = 1.0 + 2.0 * k * xy + k * k * x2 * y2
    return num / den


def mobius_add(x: HyperPoint, y: HyperPoint) -> HyperPoint:
    """Möbius addition ``x (+) y`` in the Poincaré ball."""
    _check_pair(x, y)
    if x.geometry is not Geometry.POINCARE:
        raise ContractViolationError("mobius_add is defined for poincare points only")
    out = _mobius_add_raw(x.coords, y.coords, x.curvature.k)
    return project_into_domain(out, x.geometry, x.curvature)


def _gyration(u: np.ndarray, v: np.ndarray, w: np.ndarray, k: float) -> np.ndarray:
    # gyr[u, v]w = -(u (+) v) (+) (u (+) (v (+) w))
    uv = _mobius_add_raw(u, v, k)
    inner = _mobius_add_raw(u, _mobius_add_raw(v, w, k), k)
    return _mobius_add_raw(-uv, inner, k)


def exp_map(x: HyperPoint, v: TangentVector) -> HyperPoint:
    """Exponential map: follow the geodesic from ``x`` with initial velocity ``v``."""
    if (
        v.at.geometry is not x.geometry
        or v.at.curvature != x.curvature
        or not np.array_equal(v.at.coords, x.coords)
    ):
        raise ContractViolationError("tangent vector is not anchored at x")
    vec = v.vec
    if x.geometry is Geometry.EUCLIDEAN:
        return HyperPoint(x.geometry, x.coords + vec)
    k = x.curvature.k
    if x.geometry is Geometry.POINCARE:
        nrm = float(np.linalg.norm(vec))
        if nrm == 0.0:
            return x
        lam = conformal_factor(x)
        step = np.tanh(np.sqrt(k) * lam * nrm / 2.0) * vec / (np.sqrt(k) * nrm)
        out = _mobius_add_raw(x.coords, step, k)
        return project_into_domain(out, x.geometry, x.curvature)
    nrm_sq = float(lorentz_inner(vec, vec))
    nrm = np.sqrt(max(nrm_sq, 0.0))
    if nrm == 0.0:
        return x
    out = np.cosh(np.sqrt(k) * nrm) * x.coords + np.sinh(np.sqrt(k) * nrm) * vec / (
        np.sqrt(k) * nrm
    )
    return project_into_domain(out[1:], x.geometry, x.curvature)


def log_map(x: HyperPoint, y: HyperPoint) -> TangentVector:
    """Logarithmic map: the tangent vector at ``x`` with ``exp_x(log_x(y)) = y``."""
    _check_pair(x, y)
    if x.geometry is Geometry.EUCLIDEAN:
        return TangentVector(x, y.coords - x.coords)
    k = x.curvature.k
    if x.geometry is Geometry.POINCARE:
        diff = _mobius_add_raw(-x.coords, y.coords, k)
        nrm = float(np.linalg.norm(diff))
        if nrm == 0.0:
            return TangentVector(x, np.zeros_like(x.coords))
        lam = conformal_factor(x)
        scale = 2.0 / (np.sqrt(k) * lam) * np.arctanh(min(np.sqrt(k) * nrm, 1.0 - 1e-15))
        return TangentVector(x, scale * diff / nrm)
    beta = float(x.curvature.c * lorentz_inner(x.coords, y.coords))
    if beta <= 1.0:
        return TangentVector(x, np.zeros_like(x.coords))
    vec = _arcosh(beta) * (y.coords - beta * x.coords) / np.sqrt(beta * beta - 1.0)
    # Tiny tangency residual from rounding is projected away.
    vec = vec - x.curvature.c * float(lorentz_inner(x.coords, vec)) * x.coords
    return TangentVector(x, vec)


def parallel_transport(x: HyperPoint, y: HyperPoint, v: TangentVector) -> TangentVector:
    """Transport ``v`` from the tangent space at ``x`` to the one at ``y``.

    The transport is an isometry: the Riemannian norm is preserved, and the
    geodesic velocity ``log_x(y)`` maps to ``-log_y(x)``.
    """
    _check_pair(x, y)
    if np.array_equal(x.coords, y.coords):
        return TangentVector(y, v.vec.copy())
    if x.geometry is Geometry.EUCLIDEAN:
        return TangentVector(y, v.vec.copy())
    k = x.curvature.k
    if x.geometry is Geometry.POINCARE:
        lam_ratio = conformal_factor(x) / conformal_factor(y)
        out = lam_ratio * _gyration(y.coords, -x.coords, v.vec, k)
        return TangentVector(y, out)
    c = x.curvature.c
    dot_xy = float(lorentz_inner(x.coords, y.coords))
    dot_yv = float(lorentz_inner(y.coords, v.vec))
    out = v.vec + k * dot_yv / (1.0 + c * dot_xy) * (x.coords + y.coords)
    out = out - c * float(lorentz_inner(y.coords, out)) * y.coords
    return TangentVector(y, out)


def riemannian_norm(v: TangentVector) -> float:
    """Length of a tangent vector under the manifold metric at its base point."""
    p = v.at
    if p.geometry is Geometry.EUCLIDEAN:
        return float(np.linalg.norm(v.vec))
    if p.geometry is Geometry.POINCARE:
        return conformal_factor(p) * float(np.linalg.norm(v.vec))
    return float(np.sqrt(max(lorentz_inner(v.vec, v.vec), 0.0)))


def to_poincare(x: HyperPoint) -> HyperPoint:
    """Diffeomorphism from the Lorentz model onto the Poincaré ball."""
    if x.geometry is Geometry.POINCARE:
        return x
    if x.geometry is not Geometry.LORENTZ:
        raise ContractViolationError("to_poincare expects a lorentz (or poincare) point")
    radius = x.curvature.radius
    coords = radius * x.coords[1:] / (radius + x.coords[0])
    return HyperPoint(Geometry.POINCARE, coords, x.curvature)


def to_lorentz(x: HyperPoint) -> HyperPoint:
    """Diffeomorphism from the Poincaré ball onto the Lorentz hyperboloid."""
    if x.geometry is Geometry.LORENTZ:
        return x
    if x.geometry is not Geometry.POINCARE:
        raise ContractViolationError("to_lorentz expects a poincare (or lorentz) point")
    k = x.curvature.k
    s = k * float(np.dot(x.coords, x.coords))
    x0 = x.curvature.radius * (1.0 + s) / (1.0 - s)
    spatial = 2.0 * x.coords / (1.0 - s)
    return HyperPoint(Geometry.LORENTZ, np.concatenate([[x0], spatial]), x.curvature)


def project_into_domain(coords, geometry: Geometry, curvature: Curvature | None) -> HyperPoint:
    """Build a valid HyperPoint from raw coordinates.

    Poincaré coordinates outside the ball are radially rescaled to norm
    ``(1 - BOUNDARY_EPS) * radius``.  Lorentz input supplies the spatial
    coordinates only; the time coordinate is recomputed from the manifold
    constraint.
    """
    geometry = Geometry(geometry)
    a = _as_vector(coords)
    if geometry is Geometry.EUCLIDEAN:
        return HyperPoint(geometry, a)
    if geometry is Geometry.POINCARE:
        limit = (1.0 - BOUNDARY_EPS) * curvature.radius
        nrm = float(np.linalg.norm(a))
        if nrm > limit:
            a = a * (limit / nrm)
        return HyperPoint(geometry, a, curvature)
    k = curvature.k
    x0 = np.sqrt(1.0 / k + float(np.dot(a, a)))
    return HyperPoint(geometry, np.concatenate([[x0], a]), curvature)


# ---------------------------------------------------------------------------
# Differentiable kernels.  Tensor-in/Tensor-out twins of the array kernels
# above, built from autodiff primitives so training losses can backpropagate
# through the geometry.  Formulas are identical to the ndarray versions; the
# array kernels double as oracles for these in the tests.
# ---------------------------------------------------------------------------

def _require_matrix(t: "autodiff.Tensor", name: str) -> None:
    if t.ndim != 2:
        raise ContractViolationError(f"{name} must be 2-d (rows are points), got ndim={t.ndim}")


def tensor_exp_map_origin(tangents, geometry: Geometry, c: float | None):
    """Differentiable origin exp-map; rows of ``tangents`` are tangent vectors.

    Same conventions as :func:`exp_map_origin_arrays`: identity in Euclidean
    mode, and Lorentz rows gain a leading time coordinate.
    """
    geometry = Geometry(geometry)
    t = tangents if isinstance(tangents, autodiff.Tensor) else autodiff.Tensor(tangents)
    _require_matrix(t, "tangents")
    if geometry is Geometry.EUCLIDEAN:
        return t
    k = -c
    rk = np.sqrt(k)
    # The 1e-300 pad keeps the zero-tangent row finite: the ratio evaluates
    # to exactly 1 and the sqrt gradient is annihilated by d(sqn)/dt = 0.
    nrm = ((t * t).sum(axis=1, keepdims=True) + 1e-300).sqrt()
    if geometry is Geometry.POINCARE:
        scale = (nrm * rk).tanh() / (nrm * rk)
        return t * scale
    x0 = (nrm * rk).cosh() * (1.0 / rk)
    spatial = t * ((nrm * rk).sinh() / (nrm * rk))
    return autodiff.concatenate([x0, spatial], axis=1)


def tensor_pairwise_distances(x, y, geometry: Geometry, c: float | None):
    """Differentiable all-pairs distance matrix (rows of ``x`` vs rows of ``y``)."""
    geometry = Geometry(geometry)
    x = x if isinstance(x, autodiff.Tensor) else autodiff.Tensor(x)
    y = y if isinstance(y, autodiff.Tensor) else autodiff.Tensor(y)
    _require_matrix(x, "x")
    _require_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ContractViolationError(f"length mismatch: {x.shape[1]} vs {y.shape[1]}")
    if geometry is Geometry.LORENTZ:
        k = -c
        signs = np.ones((1, x.shape[1]))
        signs[0, 0] = -1.0
        inner = x @ (y * signs).T
        return (inner * c).arcosh() * (1.0 / np.sqrt(k))
    sx = (x * x).sum(axis=1, keepdims=True)
    sy = (y * y).sum(axis=1, keepdims=True).T
    sq = (sx + sy - 2.0 * (x @ y.T)).clamp_min(0.0)
    if geometry is Geometry.EUCLIDEAN:
        return (sq + 1e-32).sqrt()
    k = -c
    arg = 1.0 + (sq * (2.0 * k)) / ((sx * (-k) + 1.0) * (sy * (-k) + 1.0))
    return arg.arcosh() * (1.0 / np.sqrt(k))


def tensor_pairwise_scores(x, y, geometry: Geometry, c: float | None):
    """Differentiable similarity scores: negated distance, or dot products in flat mode."""
    geometry = Geometry(geometry)
    if geometry is Geometry.EUCLIDEAN:
        x = x if isinstance(x, autodiff.Tensor) else autodiff.Tensor(x)
        y = y if isinstance(y, autodiff.Tensor) else autodiff.Tensor(y)
        return x @ y.T
    return -tensor_pairwise_distances(x, y, geometry, c)
