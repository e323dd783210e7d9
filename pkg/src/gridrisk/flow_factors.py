"""Gaussian law of the normalized DC line flows.

With ``p = S (sqrt(Sigma) X + mu)`` and ``f = C p`` the normalized flows are
``f = V X + W mu`` where

    C = D B L^+,   W = C S,   V = W sqrt(Sigma),   D = diag(1 / M).

``nu = W mu`` is the mean flow vector and ``sigma[i]`` the standard deviation of
line ``i`` (row norm of ``V``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BadSlackIndex, DimensionMismatch, MultipleZeroEigenvalues, NotPSD, NotSymmetric
from .grid_model import Network, build_incidence, build_laplacian

DEFAULT_REL_TOL = 1e-9


def _check_symmetric(a: np.ndarray, what: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"{what} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a), initial=0.0), 1e-300)
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * scale:
        raise NotSymmetric(f"{what} is not symmetric")


@dataclass(frozen=True)
class InjectionModel:
    """Mean and covariance of the ``n - 1`` non-slack injections (per-unit)."""

    mu: np.ndarray
    sigma_mat: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        cov = np.asarray(self.sigma_mat, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise DimensionMismatch(
                f"covariance has shape {cov.shape}, expected {(mu.size, mu.size)}"
            )
        _check_symmetric(cov, "covariance")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_mat", cov)

    @classmethod
    def iid(cls, mu, variance: float) -> "InjectionModel":
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if variance < 0:
            raise NotPSD(f"variance must be nonnegative, got {variance}")
        return cls(mu, variance * np.eye(mu.size))


def pseudo_inverse(lap: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues with magnitude at most ``rel_tol * lambda_max`` are treated as
    zero. A connected-graph Laplacian has exactly one; more than one raises
    :class:`MultipleZeroEigenvalues`.
    """
    lap = np.asarray(lap, dtype=float)
    _check_symmetric(lap, "Laplacian")
    lam, vec = np.linalg.eigh(lap)
    lam_max = np.max(np.abs(lam), initial=0.0)
    zero = np.abs(lam) <= rel_tol * lam_max
    if lap.shape[0] > 1 and np.count_nonzero(zero) > 1:
        raise MultipleZeroEigenvalues(
            f"{np.count_nonzero(zero)} eigenvalues below {rel_tol:g} * lambda_max; "
            "the graph is disconnected"
        )
    keep = ~zero
    u = vec[:, keep]
    pinv = (u / lam[keep]) @ u.T
    return 0.5 * (pinv + pinv.T)


def psd_sqrt(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues in ``[-tol * max(1, |lambda|_max), 0)`` are clamped to zero, so
    rank-deficient covariances (deterministic injections) are fine.
    """
    cov = np.asarray(cov, dtype=float)
    _check_symmetric(cov, "covariance")
    if cov.size == 0:
        return cov.copy()
    lam, vec = np.linalg.eigh(cov)
    floor = -tol * max(1.0, np.max(np.abs(lam)))
    if lam.min() < floor:
        raise NotPSD(f"covariance has eigenvalue {lam.min():.3e} < {floor:.3e}")
    root = (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.T
    return 0.5 * (root + root.T)


def slack_embedding(n: int, slack: int) -> np.ndarray:
    """The ``n x (n-1)`` matrix mapping non-slack injections to a zero-sum vector."""
    if not 0 <= slack < n:
        raise BadSlackIndex(f"slack index {slack} out of range 0..{n - 1}")
    emb = np.zeros((n, n - 1))
    cols = [i for i in range(n) if i != slack]
    emb[cols, np.arange(n - 1)] = 1.0
    emb[slack, :] = -1.0
    return emb


@dataclass(frozen=True)
class FlowFactorization:
    l_pinv: np.ndarray
    ptdf: np.ndarray
    w_mat: np.ndarray
    v_mat: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray
    m: int
    n: int
    slack: int

    @property
    def max_sigma(self) -> float:
        return float(np.max(self.sigma))

    def mean_flows(self, mu) -> np.ndarray:
        return self.w_mat @ np.asarray(mu, dtype=float)

    def at(self, mu) -> "FlowFactorization":
        """Same network and noise, different mean injection (sigma does not depend on mu)."""
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.size != self.n - 1:
            raise DimensionMismatch(f"mu has length {mu.size}, expected {self.n - 1}")
        return replace(self, mu=mu, nu=self.w_mat @ mu)


def unnormalized_ptdf(net: Network, rel_tol: float = DEFAULT_REL_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(L^+, B L^+)``: bus-injection to line-flow factors before capacity scaling."""
    l_pinv = pseudo_inverse(build_laplacian(net), rel_tol)
    return l_pinv, build_incidence(net) @ l_pinv


def factorize(net: Network, inj: InjectionModel, rel_tol: float = DEFAULT_REL_TOL) -> FlowFactorization:
    if inj.mu.size != net.n - 1:
        raise DimensionMismatch(f"mu has length {inj.mu.size}, expected n - 1 = {net.n - 1}")
    l_pinv, bl = unnormalized_ptdf(net, rel_tol)
    ptdf = bl / net.capacities[:, None]
    w_mat = ptdf @ slack_embedding(net.n, net.slack)
    v_mat = w_mat @ psd_sqrt(inj.sigma_mat)
    return FlowFactorization(
        l_pinv=l_pinv,
        ptdf=ptdf,
        w_mat=w_mat,
        v_mat=v_mat,
        nu=w_mat @ inj.mu,
        sigma=np.linalg.norm(v_mat, axis=1),
        mu=inj.mu.copy(),
        m=net.m,
        n=net.n,
        slack=net.slack,
    )
