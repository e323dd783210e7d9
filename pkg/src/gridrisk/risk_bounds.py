"""Upper bounds on the risk level ``r(mu) = E max_i |f_i|`` and on the failure probability.

Two bounds on the risk level are provided:

* ``r_up = max|nu| + max(sigma) * sqrt(2 log 2m)``, fully explicit;
* ``r_star = inf_{s > 0} g(s)`` with
  ``g(s) = log(2m)/s + max_i (sigma_i^2 s / 2 + |nu_i|)``, found exactly by
  evaluating ``g`` on a finite candidate set.

Either one plugs into ``P(max|f| >= 1) <= exp(-(1 - r)^2 / (2 max sigma^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_arrays(nu, sigma) -> tuple[np.ndarray, np.ndarray]:
    nu = np.abs(np.asarray(nu, dtype=float).reshape(-1))
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if nu.size == 0 or nu.size != sigma.size:
        raise ValueError(f"nu and sigma must be nonempty and equal length, got {nu.size}, {sigma.size}")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    return nu, sigma


def union_factor(m: int) -> float:
    """``sqrt(2 log 2m)``, the price of taking a maximum over ``2m`` Gaussians."""
    return math.sqrt(2.0 * math.log(2 * m))


def r_up(nu, sigma) -> float:
    nu, sigma = _as_arrays(nu, sigma)
    return float(nu.max() + sigma.max() * union_factor(nu.size))


def g_objective(s, nu, sigma) -> np.ndarray:
    """``g(s)`` evaluated at each entry of ``s`` (all entries > 0)."""
    nu, sigma = _as_arrays(nu, sigma)
    s = np.asarray(s, dtype=float)
    flat = s.reshape(-1)
    log2m = math.log(2 * nu.size)
    out = np.empty_like(flat)
    # chunk to bound the (len(s), m) temporary
    step = max(1, 2_000_000 // nu.size)
    half_var = 0.5 * sigma**2
    for a in range(0, flat.size, step):
        blk = flat[a : a + step]
        out[a : a + step] = log2m / blk + np.max(blk[:, None] * half_var[None, :] + nu[None, :], axis=1)
    return out.reshape(s.shape)


def candidate_points(nu, sigma) -> np.ndarray:
    """Points where the minimum of ``g`` can sit.

    These are the minimizers ``sqrt(2 log 2m) / sigma_i`` of the single-line
    terms (``sigma_i > 0``) and the positive crossings
    ``2 (|nu_i| - |nu_j|) / (sigma_j^2 - sigma_i^2)`` of the affine pieces.
    Pairs with equal sigma never cross and are skipped.
    """
    nu, sigma = _as_arrays(nu, sigma)
    pos = sigma > 0
    own = union_factor(nu.size) / sigma[pos]
    var = sigma**2
    iu, ju = np.triu_indices(nu.size, k=1)
    dvar = var[ju] - var[iu]
    ok = dvar != 0
    cross = 2.0 * (nu[iu[ok]] - nu[ju[ok]]) / dvar[ok]
    cross = cross[np.isfinite(cross) & (cross > 0)]
    return np.unique(np.concatenate([own, cross]))


def r_star(nu, sigma) -> tuple[float, float]:
    """Return ``(r_star, s_star)``; ``s_star`` is ``inf`` when all sigma vanish.

    Ties in the minimum are broken towards the smallest ``s``.
    """
    nu, sigma = _as_arrays(nu, sigma)
    if not np.any(sigma > 0):
        return float(nu.max()), math.inf
    cand = candidate_points(nu, sigma)  # sorted ascending
    vals = g_objective(cand, nu, sigma)
    k = int(np.argmin(vals))  # first occurrence = smallest s
    value = float(vals[k])
    # the max-sigma candidate evaluates to r_up in exact arithmetic; absorb rounding
    return min(value, r_up(nu, sigma)), float(cand[k])


def failure_bound(r: float, max_sigma: float) -> float:
    """``exp(-(1 - r)^2 / (2 max_sigma^2))`` for ``r < 1``, else the vacuous bound 1.

    With ``max_sigma == 0`` the flows are deterministic and the bound is 0 or 1.
    """
    if r >= 1.0:
        return 1.0
    if max_sigma <= 0.0:
        return 0.0
    return math.exp(-((1.0 - r) ** 2) / (2.0 * max_sigma**2))


def risk_threshold(q: float, max_sigma: float) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return 1.0 - max_sigma * math.sqrt(2.0 * math.log(1.0 / q))


@dataclass(frozen=True)
class RiskAssessment:
    r_up: float
    r_star: float
    s_star: float
    max_sigma: float
    failure_bound: float
    threshold: float
    q: float
    bound_evaluated_at: str = "r_star"

    @property
    def bound_vacuous(self) -> bool:
        return self.r_star >= 1.0

    @property
    def in_up(self) -> bool:
        return self.r_up <= self.threshold

    @property
    def in_star(self) -> bool:
        return self.r_star <= self.threshold


def assess(factors, q: float) -> RiskAssessment:
    """Bundle both risk bounds, the threshold for ``q`` and the failure bound.

    The failure bound is evaluated at ``r_star``; since ``r <= r_star`` and the
    bound increases with ``r``, this stays a valid upper bound on ``P(L)``.
    """
    nu, sigma = factors.nu, factors.sigma
    rs, s_star = r_star(nu, sigma)
    max_sigma = float(np.max(sigma))
    return RiskAssessment(
        r_up=r_up(nu, sigma),
        r_star=rs,
        s_star=s_star,
        max_sigma=max_sigma,
        failure_bound=failure_bound(rs, max_sigma),
        threshold=risk_threshold(q, max_sigma),
        q=q,
    )
