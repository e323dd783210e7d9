"""Safe capacity regions in mean-injection space.

Three nested regions are supported, all of the form
``{mu : risk(mu) <= 1 - max(sigma) sqrt(2 log 1/q)}``:

``up``    risk = r_up, an explicit polyhedron (see :func:`rup_halfspaces`);
``star``  risk = r_star, convex, evaluated pointwise;
``ci``    risk = Monte Carlo estimate of r(mu) plus a margin of standard errors.

2-D slices are traced by bisection along rays from an interior base point.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import risk_bounds
from ._json import dumps
from .errors import BasePointOutside, EstimatorRequired, NonFiniteBoundary

KINDS = ("up", "star", "ci")


class RiskEstimator(Protocol):
    def __call__(self, mu, stream: int = 0):  # -> McEstimate
        ...


@dataclass(frozen=True)
class HalfSpaceSystem:
    """``{mu : a_mat @ mu <= b_vec}``."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    empty: bool = False

    def contains(self, mu) -> bool:
        return bool(np.all(self.a_mat @ np.asarray(mu, dtype=float) <= self.b_vec))

    def to_dict(self) -> dict:
        return {"a_mat": self.a_mat, "b_vec": self.b_vec, "empty": self.empty}


def rup_offset(max_sigma: float, m: int, q: float) -> float:
    """Right-hand side ``1 - max_sigma (sqrt(2 log 1/q) + sqrt(2 log 2m))``."""
    return risk_bounds.risk_threshold(q, max_sigma) - max_sigma * risk_bounds.union_factor(m)


def rup_halfspaces(factors, q: float) -> HalfSpaceSystem:
    t_up = rup_offset(factors.max_sigma, factors.m, q)
    a_mat = np.vstack([factors.w_mat, -factors.w_mat])
    b_vec = np.full(2 * factors.m, t_up)
    return HalfSpaceSystem(a_mat, b_vec, empty=t_up <= 0.0)


def membership(
    mu,
    factors,
    q: float,
    kind: str = "up",
    estimator: RiskEstimator | None = None,
    *,
    se_margin: float = 3.0,
    stream: int = 0,
) -> bool:
    """Whether ``mu`` lies in the region of the given kind.

    ``kind="ci"`` needs an estimator; the estimate plus ``se_margin`` standard
    errors is compared to the threshold.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    mu = np.asarray(mu, dtype=float)
    nu = factors.w_mat @ mu
    max_sigma = factors.max_sigma
    if kind == "up":
        # same arithmetic as rup_halfspaces so both agree bit for bit
        t_up = rup_offset(max_sigma, factors.m, q)
        return bool(np.all(nu <= t_up) and np.all(-nu <= t_up))
    threshold = risk_bounds.risk_threshold(q, max_sigma)
    if kind == "star":
        return risk_bounds.r_star(nu, factors.sigma)[0] <= threshold
    if estimator is None:
        raise EstimatorRequired("membership in the 'ci' region needs a risk estimator")
    est = estimator(mu, stream=stream)
    return est.mean + se_margin * est.std_error <= threshold


@dataclass(frozen=True)
class RegionSlice:
    axis_i: int
    axis_j: int
    base_mu: np.ndarray
    kind: str
    q: float
    rays: int
    angles: np.ndarray
    vertices: np.ndarray  # rays x 2, absolute (mu_i, mu_j)
    bounded: np.ndarray  # rays, False where the ray never left the region
    tol: float
    seed: int | None = None
    labels: tuple[str, str] = ("mu_i", "mu_j")
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle", "mu_i", "mu_j"])
        for a, (x, y) in zip(self.angles, self.vertices):
            w.writerow([repr(float(a)), repr(float(x)), repr(float(y))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "q": self.q,
            "axes": [self.axis_i, self.axis_j],
            "axis_labels": list(self.labels),
            "base_mu": self.base_mu,
            "rays": self.rays,
            "tol": self.tol,
            "seed": self.seed,
            "angles": self.angles,
            "vertices": self.vertices,
            "bounded": [bool(b) for b in self.bounded],
            **self.extra,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _ray_boundary(inside, direction, tol: float, max_radius: float) -> tuple[float, bool]:
    """Distance to the boundary along ``direction``; relies on convexity of the region."""
    lo, hi = 0.0, 1.0
    while inside(hi * direction):
        lo = hi
        hi *= 2.0
        if hi > max_radius:
            if inside(max_radius * direction):
                return max_radius, False
            hi = max_radius
            break
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if inside(mid * direction):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), True


def sweep_slice(
    factors,
    base_mu,
    axis_i: int,
    axis_j: int,
    q: float,
    kind: str = "up",
    rays: int = 60,
    tol: float = 1e-6,
    estimator: RiskEstimator | None = None,
    *,
    max_radius: float = 1e6,
    se_margin: float = 3.0,
    workers: int = 1,
    strict: bool = False,
    seed: int | None = None,
    labels: tuple[str, str] = ("mu_i", "mu_j"),
) -> RegionSlice:
    """Trace the boundary of a 2-D slice of a region through ``base_mu``.

    Coordinates ``axis_i`` and ``axis_j`` of ``mu`` vary; the rest stay at
    ``base_mu``. Ray ``k`` points at angle ``2 pi k / rays`` and, for
    ``kind="ci"``, queries the estimator on stream ``k + 1``.

    Raises
    ------
    BasePointOutside
        If ``base_mu`` is not in the region.
    NonFiniteBoundary
        With ``strict=True``, if some ray stays inside up to ``max_radius``.
        Otherwise such vertices are returned with ``bounded=False``.
    """
    if rays < 8:
        raise ValueError(f"rays must be >= 8, got {rays}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    base = np.asarray(base_mu, dtype=float).reshape(-1)
    dim = factors.w_mat.shape[1]
    if base.size != dim:
        raise ValueError(f"base_mu has length {base.size}, expected {dim}")
    if axis_i == axis_j or not (0 <= axis_i < dim and 0 <= axis_j < dim):
        raise ValueError(f"axes must be distinct indices in 0..{dim - 1}, got {axis_i}, {axis_j}")
    if kind == "ci" and estimator is None:
        raise EstimatorRequired("sweeping the 'ci' region needs a risk estimator")
    if not membership(base, factors, q, kind, estimator, se_margin=se_margin, stream=0):
        raise BasePointOutside(f"base point is outside the {kind!r} region for q={q:g}")

    angles = 2.0 * np.pi * np.arange(rays) / rays

    def trace(k: int):
        d2 = np.array([math.cos(angles[k]), math.sin(angles[k])])
        d = np.zeros(dim)
        d[axis_i], d[axis_j] = d2

        def inside(step):
            return membership(base + step, factors, q, kind, estimator, se_margin=se_margin, stream=k + 1)

        return _ray_boundary(inside, d, tol, max_radius), d2

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(trace, range(rays)))
    else:
        results = [trace(k) for k in range(rays)]

    origin = base[[axis_i, axis_j]]
    vertices = np.array([origin + r * d2 for (r, _), d2 in results])
    bounded = np.array([b for (_, b), _ in results])
    if strict and not bounded.all():
        bad = [float(a) for a, b in zip(angles, bounded) if not b]
        raise NonFiniteBoundary(f"region unbounded within radius {max_radius:g} at angles {bad}")
    return RegionSlice(
        axis_i, axis_j, base, kind, q, rays, angles, vertices, bounded, tol, seed, labels
    )


def is_convex_position(points, tol: float) -> bool:
    """True if no point lies deeper than ``tol`` inside the hull of the others."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        return True
    for k in range(len(pts)):
        others = np.delete(pts, k, axis=0)
        try:
            hull = ConvexHull(others)
        except QhullError:
            continue  # others are degenerate (collinear); cannot enclose pts[k]
        # facet equations are normalized: a . x + b <= 0 inside
        depth = -np.max(hull.equations[:, :2] @ pts[k] + hull.equations[:, 2])
        if depth > tol:
            return False
    return True
