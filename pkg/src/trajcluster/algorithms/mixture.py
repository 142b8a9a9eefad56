"""EM for mixtures of polynomial regressions, optionally with a random intercept.

Without the random intercept this is group-based trajectory modelling: each
cluster is a regression ``y_ij = x_ij beta_k + e_ij``. With it, trajectory
``i`` in cluster ``k`` has marginal covariance
``V_i = s2e * I + s2u * 1 1'``, and every quantity involving ``V_i`` is
evaluated in closed form via the rank-one structure::

    det V_i            = s2e**(J_i - 1) * (s2e + J_i * s2u)
    r' V_i^{-1} r      = (sum r**2 - s2u * (sum r)**2 / (s2e + J_i * s2u)) / s2e

The M-step updates ``beta_k`` by weighted GLS and the variance components
by an EM step on the random intercept's conditional moments, so the
marginal log-likelihood never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)
VARIANCE_FLOOR = 1e-10


@dataclass
class MixtureFit:
    beta: np.ndarray
    sigma2: np.ndarray
    sigma2_u: float
    pi: np.ndarray
    postprob: np.ndarray
    log_likelihood: float
    converged: bool
    n_iter: int
    trace: List[float] = field(default_factory=list)
    n_params: int = 0
    n_failed_starts: int = 0


class _Collapse(Exception):
    pass


def trajectory_logdensity(y, X, beta, sigma2_e: float, sigma2_u: float = 0.0) -> float:
    """Marginal normal log-density of one trajectory under one cluster."""
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    J = r.size
    d = sigma2_e + J * sigma2_u
    quad = (np.dot(r, r) - sigma2_u * r.sum() ** 2 / d) / sigma2_e
    logdet = (J - 1) * np.log(sigma2_e) + np.log(d)
    return float(-0.5 * (J * LOG_2PI + logdet + quad))


class RegressionMixture:
    """Holds the pooled design and runs EM from random soft starts.

    Parameters
    ----------
    X : ndarray (n_obs, B)
        Design rows, grouped by trajectory.
    y : ndarray (n_obs,)
    offsets : ndarray (N + 1,)
        Start offset of every trajectory's block of rows.
    """

    def __init__(
        self,
        X,
        y,
        offsets,
        k: int,
        random_intercept: bool = False,
        cluster_variances: bool = False,
        max_iter: int = 500,
        tol: float = 1e-8,
        fixed_sigma2_u: Optional[float] = None,
    ):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.offsets = np.asarray(offsets)
        self.starts = self.offsets[:-1]
        self.J = np.diff(self.offsets).astype(float)
        self.N = self.J.size
        self.n_obs = self.y.size
        self.B = self.X.shape[1]
        self.k = int(k)
        self.random_intercept = bool(random_intercept)
        self.cluster_variances = bool(cluster_variances) and not self.random_intercept
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.fixed_sigma2_u = None if fixed_sigma2_u is None else float(fixed_sigma2_u)
        self.traj = np.repeat(np.arange(self.N), np.diff(self.offsets))
        # per-trajectory sufficient statistics for the GLS step
        self.XtX = np.einsum("oa,ob->oab", self.X, self.X)
        self.XtX = np.add.reduceat(self.XtX, self.starts, axis=0)
        self.Xty = np.add.reduceat(self.X * self.y[:, None], self.starts, axis=0)
        self.sX = np.add.reduceat(self.X, self.starts, axis=0)
        self.sy = np.add.reduceat(self.y, self.starts)

    @property
    def n_params(self) -> int:
        free_u = self.random_intercept and self.fixed_sigma2_u is None
        n_var = (self.k if self.cluster_variances else 1) + (1 if free_u else 0)
        return self.k * self.B + n_var + (self.k - 1)

    # -- pieces -------------------------------------------------------------
    def _seg(self, v):
        return np.add.reduceat(v, self.starts, axis=0)

    def _residual_sums(self, beta):
        r = self.y[:, None] - self.X @ beta.T
        return r, self._seg(r), self._seg(r**2)

    def _component_loglik(self, beta, sigma2, sigma2_u):
        """N x K matrix of per-trajectory, per-cluster log-densities."""
        _, S1, S2 = self._residual_sums(beta)
        J = self.J[:, None]
        if self.random_intercept:
            s2e = sigma2[0]
            d = s2e + J * sigma2_u
            quad = (S2 - sigma2_u * S1**2 / d) / s2e
            logdet = (J - 1) * np.log(s2e) + np.log(d)
            return -0.5 * (J * LOG_2PI + logdet + quad)
        s2 = sigma2[None, :]
        return -0.5 * (J * (LOG_2PI + np.log(s2)) + S2 / s2)

    def e_step(self, beta, sigma2, sigma2_u, pi):
        with np.errstate(divide="ignore"):
            logw = np.log(pi)[None, :] + self._component_loglik(beta, sigma2, sigma2_u)
        ll_i = logsumexp(logw, axis=1)
        tau = np.exp(logw - ll_i[:, None])
        return tau, float(ll_i.sum())

    def m_step(self, tau, beta_old, sigma2, sigma2_u):
        pi = tau.mean(axis=0)
        beta = np.array(beta_old, dtype=float) if beta_old is not None else np.zeros((self.k, self.B))
        if self.random_intercept:
            c = sigma2_u / (sigma2[0] + self.J * sigma2_u)
        else:
            c = np.zeros(self.N)
        for k in range(self.k):
            w = tau[:, k]
            if w.sum() <= 1e-12:
                continue
            A = np.einsum("i,iab->ab", w, self.XtX) - np.einsum("i,ia,ib->ab", w * c, self.sX, self.sX)
            b = w @ self.Xty - (w * c * self.sy) @ self.sX
            try:
                beta[k] = np.linalg.solve(A, b)
            except np.linalg.LinAlgError:
                beta[k] = np.linalg.lstsq(A, b, rcond=None)[0]
        _, S1, S2 = self._residual_sums(beta)
        J = self.J[:, None]
        if self.random_intercept:
            s2e, s2u = sigma2[0], sigma2_u
            d = s2e + J * s2u
            m = s2u * S1 / d
            v = s2u * s2e / d
            sq = S2 - 2.0 * m * S1 + J * m**2 + J * v
            new_s2e = float((tau * sq).sum() / self.n_obs)
            if self.fixed_sigma2_u is not None:
                new_s2u = self.fixed_sigma2_u
            else:
                new_s2u = max(float((tau * (m**2 + v)).sum() / self.N), 0.0)
            return beta, np.array([new_s2e]), new_s2u, pi
        if self.cluster_variances:
            wsum = (tau * J).sum(axis=0)
            s2 = np.where(wsum > 0, (tau * S2).sum(axis=0) / np.maximum(wsum, 1e-300), sigma2)
            return beta, s2, 0.0, pi
        return beta, np.array([float((tau * S2).sum() / self.n_obs)]), 0.0, pi

    # -- drivers ------------------------------------------------------------
    def run(self, tau0) -> MixtureFit:
        """EM from an initial soft assignment."""
        var_y = float(np.var(self.y)) or 1.0
        if self.random_intercept:
            sigma2, sigma2_u = np.array([var_y / 2.0]), var_y / 2.0
            if self.fixed_sigma2_u is not None:
                sigma2_u = self.fixed_sigma2_u
        else:
            sigma2, sigma2_u = np.full(self.k if self.cluster_variances else 1, var_y), 0.0
        beta = None
        tau = np.asarray(tau0, dtype=float)
        trace: List[float] = []
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            beta, sigma2, sigma2_u, pi = self.m_step(tau, beta, sigma2, sigma2_u)
            if np.any(sigma2 < VARIANCE_FLOOR) or not np.all(np.isfinite(beta)):
                raise _Collapse()
            tau, ll = self.e_step(beta, self._loglik_sigma(sigma2), sigma2_u, pi)
            if not np.isfinite(ll):
                raise _Collapse()
            trace.append(ll)
            if len(trace) > 1 and trace[-1] - trace[-2] < self.tol:
                converged = True
                break
        return MixtureFit(
            beta=beta,
            sigma2=self._loglik_sigma(sigma2),
            sigma2_u=float(sigma2_u),
            pi=tau.mean(axis=0),
            postprob=tau,
            log_likelihood=trace[-1],
            converged=converged,
            n_iter=it,
            trace=trace,
            n_params=self.n_params,
        )

    def _loglik_sigma(self, sigma2):
        if self.random_intercept:
            return sigma2
        if self.cluster_variances:
            return sigma2
        return np.full(self.k, sigma2[0])

    def fit(self, rng: np.random.Generator, nstart: int = 10) -> Optional[MixtureFit]:
        """Best of ``nstart`` runs from Dirichlet(1, ..., 1) soft assignments.

        Starts whose variance collapses are discarded; returns ``None`` when
        every start collapses.
        """
        best = None
        failed = 0
        for _ in range(max(1, int(nstart))):
            tau0 = rng.dirichlet(np.ones(self.k), size=self.N) if self.k > 1 else np.ones((self.N, 1))
            try:
                res = self.run(tau0)
            except _Collapse:
                failed += 1
                continue
            if best is None or res.log_likelihood > best.log_likelihood:
                best = res
        if best is not None:
            best.n_failed_starts = failed
        return best
