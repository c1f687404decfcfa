"""Gaussian mixture models fitted by expectation maximization, six MapReduce jobs per iteration.

For K components with weights alpha_k, means mu_k and covariances Sigma_k, one iteration runs:

1. Densities: log(alpha_k) + log N(x_i | mu_k, Sigma_k) for every point and component.
2. Memberships: w_ik = alpha_k N(x_i | k) / sum_j alpha_j N(x_i | j), normalized in log space.
3. Effective counts: N_k = sum_i w_ik.
4. Weights and means: alpha_k = N_k / N and mu_k = sum_i w_ik x_i / N_k.
5. Covariances: Sigma_k = sum_i w_ik (x_i - mu_k)(x_i - mu_k)^T / N_k, over all N points.
6. Log-likelihood: sum_i log sum_k alpha_k N(x_i | k), of the model used in step 1.

Iteration stops once the log-likelihood improves by less than the tolerance. Covariances are
stored as estimated; 1e-6 I is added to each only when it is factorized.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, List, Tuple

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from ..DistVector import DistVector
from ..display import _log
from ..errors import NumericalError
from ..mapreduce import JobCounters, mapreduce
from ..wire import F64, F64_ARRAY

REGULARIZATION = 1e-6


@dataclass
class GmmModel:
    """Parameters of a Gaussian mixture.

    Attributes:
        weights: (K,) mixture weights alpha_k, summing to 1.
        means: (K, dim) component means mu_k.
        covariances: (K, dim, dim) symmetric positive definite covariances Sigma_k.
        n_points: Number of points the model was fitted to.
        log_likelihood: Log-likelihood of the last E-step.
        iterations: EM iterations run.
        converged: Whether the log-likelihood stopped improving by the tolerance.
        history: Log-likelihood of every E-step.
        counters: This worker's MapReduce counters, summed over all jobs.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    n_points: int = 0
    log_likelihood: float = float("-inf")
    iterations: int = 0
    converged: bool = False
    history: List[float] = field(default_factory=list)
    counters: JobCounters = field(default_factory=JobCounters)

    @classmethod
    def spherical(cls, means: np.ndarray, variance: float = 1.0) -> "GmmModel":
        """Equal weights and covariance `variance * I` around the given means."""
        means = np.array(means, dtype=np.float64, ndmin=2)
        k, dim = means.shape
        return cls(
            weights=np.full(k, 1.0 / k),
            means=means,
            covariances=np.repeat(variance * np.eye(dim)[np.newaxis], k, axis=0),
        )

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def copy(self) -> "GmmModel":
        return GmmModel(
            weights=self.weights.copy(),
            means=self.means.copy(),
            covariances=self.covariances.copy(),
            n_points=self.n_points,
            log_likelihood=self.log_likelihood,
            iterations=self.iterations,
            converged=self.converged,
            history=list(self.history),
        )

    def as_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _factorize(model: GmmModel) -> List[Tuple[np.ndarray, float]]:
    """Cholesky factor and log-determinant of every regularized covariance.

    Raises:
        NumericalError: Naming the first component whose covariance is not positive definite.
    """
    dim = model.means.shape[1]
    factors = []
    for k, sigma in enumerate(model.covariances):
        try:
            lower = linalg.cholesky(sigma + REGULARIZATION * np.eye(dim), lower=True)
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericalError(
                f"covariance of component {k} is not positive definite: {e}"
            ) from e
        factors.append((lower, 2.0 * float(np.log(np.diag(lower)).sum())))
    return factors


def _log_weighted_densities(
    block: np.ndarray, model: GmmModel, factors: List[Tuple[np.ndarray, float]]
) -> np.ndarray:
    """(n, K) array of log(alpha_k) + log N(x_i | mu_k, Sigma_k)."""
    n, dim = block.shape
    out = np.empty((n, model.n_components))
    with np.errstate(divide="ignore"):
        log_weights = np.log(model.weights)
    for k, (lower, log_det) in enumerate(factors):
        z = linalg.solve_triangular(lower, (block - model.means[k]).T, lower=True)
        mahalanobis = np.einsum("ij,ij->j", z, z)
        out[:, k] = log_weights[k] - 0.5 * (dim * np.log(2.0 * np.pi) + log_det + mahalanobis)
    return out


def _memberships(log_densities: np.ndarray) -> np.ndarray:
    return np.exp(log_densities - logsumexp(log_densities, axis=1, keepdims=True))


def e_step(points: DistVector, model: GmmModel) -> Tuple[DistVector, DistVector, JobCounters]:
    """Steps 1 and 2: log densities and memberships of every point. Collective.

    Returns:
        DistVectors of (n, K) log weighted densities and memberships, partitioned like
        `points`, and the counters of both jobs.
    """
    factors = _factorize(model)
    k = model.n_components

    def emit_log_densities(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
        if len(block):
            rows = _log_weighted_densities(block, model, factors)
            for i, row in enumerate(rows):
                emit(start + i, row)

    log_densities = DistVector.like(points, fill=np.zeros(k), codec=F64_ARRAY)
    counters = mapreduce(
        points, emit_log_densities, "sum", log_densities, value_codec=F64_ARRAY, batched=True
    )

    def emit_memberships(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
        if len(block):
            for i, row in enumerate(_memberships(np.asarray(block))):
                emit(start + i, row)

    memberships = DistVector.like(points, fill=np.zeros(k), codec=F64_ARRAY)
    counters += mapreduce(
        log_densities, emit_memberships, "sum", memberships, value_codec=F64_ARRAY, batched=True
    )
    return log_densities, memberships, counters


def _m_step(
    model: GmmModel, n: int, totals: np.ndarray, weighted_sums: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    if np.any(totals <= 0):
        k = int(np.argmin(totals))
        raise NumericalError(f"component {k} has no membership weight left")
    return totals / n, weighted_sums / totals[:, np.newaxis]


def gmm_em(
    points: DistVector,
    init: GmmModel,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> GmmModel:
    """Fits a Gaussian mixture by EM until the log-likelihood gains less than `tol`. Collective.

    Example:
        ```python
        model = gmm_em(points, GmmModel.spherical(initial_centers(points, 5)))
        ```

    Args:
        points: DistVector with (n, dim) float array shards.
        init: Starting model, the same on every worker.
        tol: Convergence threshold on the log-likelihood gain.
        max_iterations: Upper bound on iterations.

    Returns:
        The fitted GmmModel.

    Raises:
        NumericalError: If a covariance cannot be factorized even after regularization, or a
            component loses all of its points.
    """
    model = init.copy()
    k, dim = model.means.shape
    n = points.global_size()
    model.n_points = n
    ctx = points.ctx

    for _ in range(max_iterations):
        log_densities, memberships, counters = e_step(points, model)
        model.counters += counters
        w_start = memberships.local_start

        def emit_counts(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if len(block):
                emit(0, np.asarray(block).sum(axis=0))

        totals: List[Any] = [np.zeros(k)]
        model.counters += mapreduce(
            memberships, emit_counts, "sum", totals, value_codec=F64_ARRAY, batched=True
        )

        def emit_weighted_sums(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if len(block):
                w = memberships.local[start - w_start : start - w_start + len(block)]
                emit(0, w.T @ block)

        weighted: List[Any] = [np.zeros((k, dim))]
        model.counters += mapreduce(
            points, emit_weighted_sums, "sum", weighted, value_codec=F64_ARRAY, batched=True
        )
        weights, means = _m_step(model, n, totals[0], weighted[0])

        def emit_scatter(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if len(block):
                w = memberships.local[start - w_start : start - w_start + len(block)]
                diff = block[:, np.newaxis, :] - means[np.newaxis, :, :]
                emit(0, np.einsum("nk,nkd,nke->kde", w, diff, diff))

        scatter: List[Any] = [np.zeros((k, dim, dim))]
        model.counters += mapreduce(
            points, emit_scatter, "sum", scatter, value_codec=F64_ARRAY, batched=True
        )

        def emit_log_likelihood(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if len(block):
                emit(0, float(logsumexp(np.asarray(block), axis=1).sum()))

        log_likelihood: List[Any] = [0.0]
        model.counters += mapreduce(
            log_densities, emit_log_likelihood, "sum", log_likelihood, value_codec=F64, batched=True
        )

        previous = model.log_likelihood
        model.weights = weights
        model.means = means
        model.covariances = scatter[0] / totals[0][:, np.newaxis, np.newaxis]
        model.log_likelihood = log_likelihood[0]
        model.history.append(log_likelihood[0])
        model.iterations += 1
        _log(f"gmm iteration {model.iterations}: log-likelihood {log_likelihood[0]:.6f}", ctx.rank)
        if log_likelihood[0] - previous < tol:
            model.converged = True
            break
    return model


def gmm_serial(
    points: np.ndarray,
    init: GmmModel,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> GmmModel:
    """Reference EM over a local array, with the same steps and stopping rule as `gmm_em`."""
    points = np.asarray(points, dtype=np.float64)
    model = init.copy()
    n = len(points)
    model.n_points = n
    for _ in range(max_iterations):
        log_densities = _log_weighted_densities(points, model, _factorize(model))
        w = _memberships(log_densities)
        totals = w.sum(axis=0)
        weights, means = _m_step(model, n, totals, w.T @ points)
        diff = points[:, np.newaxis, :] - means[np.newaxis, :, :]
        scatter = np.einsum("nk,nkd,nke->kde", w, diff, diff)
        log_likelihood = float(logsumexp(log_densities, axis=1).sum())

        previous = model.log_likelihood
        model.weights, model.means = weights, means
        model.covariances = scatter / totals[:, np.newaxis, np.newaxis]
        model.log_likelihood = log_likelihood
        model.history.append(log_likelihood)
        model.iterations += 1
        if log_likelihood - previous < tol:
            model.converged = True
            break
    return model
