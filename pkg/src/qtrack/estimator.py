"""Maximum-likelihood track reconstruction from a measurement record.

With (R, M) the filter matrices of a certified model (spectral radius of M
strictly below one), the most likely initial phase-space label given a record
q_0, q_1, ... is the geometric series

    zeta_hat = sum_{j >= 0} M^j R q_j,

and its shifts zeta_hat_n = sum_j M^j R q_{j+n} reconstruct the whole label
trajectory: on data generated by the process itself, zeta_hat_n equals zeta_n
up to the truncation tail.  The residuals eta_hat_n = q_n - xi_hat_n are then
iid N(0, Sigma - (2 Im W_hat)^{-1}).

Likelihood ratios between two initial states are ratios of coherent-label
densities evaluated at zeta_hat, and the finite-n operator ratios

    M_n = rho(W_n^* W_n) / tau(W_n^* W_n)

converge to that limit; they are computed here in log domain by propagating
each coherent component of rho and tau through the exact one-step
measurement/propagation maps (Gaussian outcome weights accumulate as sums of
log densities, so records hundreds of steps long do not underflow).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .coherent import apply_measurement, evolve_forward
from .filters import FilterMatrices
from .gaussian import GaussianDensity
from .phase_space import ModelSpec, PhaseSpacePoint
from .squeezing import SqueezingMatrix, StableSqueezing, forward_squeezing_map
from .trajectory import InitialStateSpec, MeasurementRecord, born_components

__all__ = [
    "EstimatorOutput",
    "RecordTooShortError",
    "mle",
    "mle_shifted",
    "mle_sequence",
    "residuals",
    "rn_weight",
    "povm_ratio_sequence",
]


class RecordTooShortError(ValueError):
    """The record cannot support the requested truncation tolerance."""

    def __init__(self, required: int, available: int, tol: float):
        super().__init__(
            f"record of length {available} too short for tail tolerance {tol:.1e}; "
            f"need at least {required} outcomes"
        )
        self.required = required
        self.available = available


@dataclass(frozen=True)
class EstimatorOutput:
    """Truncated series estimate with a certified geometric tail bound."""

    zeta_hat: PhaseSpacePoint
    truncation: int
    tail_bound: float


def _outcomes(record) -> np.ndarray:
    q = record.outcomes if isinstance(record, MeasurementRecord) else np.asarray(record, float)
    return np.atleast_2d(q)


def _power_norms_r(fm: FilterMatrices, up_to: int) -> np.ndarray:
    """Exact spectral norms ||M^j R|| for j = 0..up_to."""
    norms = np.empty(up_to + 1)
    p = fm.r.copy()
    norms[0] = np.linalg.norm(p, 2)
    for j in range(1, up_to + 1):
        p = fm.m @ p
        norms[j] = np.linalg.norm(p, 2)
    return norms


def _contracting_block(fm: FilterMatrices, max_block: int = 256) -> tuple[int, float]:
    """Smallest block length m with ||M^m|| < 1; exists when rho(M) < 1."""
    p = np.eye(fm.m.shape[0])
    for m in range(1, max_block + 1):
        p = p @ fm.m
        nrm = np.linalg.norm(p, 2)
        if nrm < 1.0:
            return m, float(nrm)
    raise ValueError("no contracting power of M up to length 256; spectral radius >= 1?")


def certified_tail(fm: FilterMatrices, truncation: int, q_max: float) -> float:
    """Certified bound on || sum_{j > truncation} M^j R q_j || when ||q_j|| <= q_max.

    Uses exact norms of the first block of powers past the truncation and the
    submultiplicative closure ||M^{j+m}|| <= ||M^m|| ||M^j|| with a contracting
    block ||M^m|| < 1:

        sum_{j>J} ||M^j R|| <= (sum_{b=0}^{m-1} ||M^{J+1+b} R||) / (1 - ||M^m||).
    """
    m_block, q_m = _contracting_block(fm)
    norms = _power_norms_r(fm, truncation + m_block)
    head = norms[truncation + 1: truncation + 1 + m_block].sum()
    return float(head / (1.0 - q_m) * q_max)


def _spectral_radius(fm: FilterMatrices) -> float:
    return float(np.abs(np.linalg.eigvals(fm.m)).max())


def mle(record, fm: FilterMatrices, tol: float = 1e-10) -> EstimatorOutput:
    """Maximum-likelihood initial label from a record, truncated at tolerance ``tol``.

    The truncation order is J = ceil( log(tol (1-r) / max_k ||R q_k||) / log r )
    with r the spectral radius of M; the reported tail bound additionally
    certifies the omitted terms against outcomes bounded by the largest
    observed one.  Raises ``RecordTooShortError`` when the record cannot reach
    the requested tolerance.
    """
    return mle_shifted(record, 0, fm, tol)


def mle_shifted(record, n: int, fm: FilterMatrices, tol: float = 1e-10) -> EstimatorOutput:
    """The shift zeta_hat_n = sum_j M^j R q_{j+n} with certified truncation."""
    q = _outcomes(record)
    if n < 0 or n >= q.shape[0]:
        raise ValueError(f"shift n={n} outside record of length {q.shape[0]}")
    q = q[n:]
    r = _spectral_radius(fm)
    if r >= 1.0:
        raise ValueError(f"spectral radius of M is {r:.6f} >= 1; the series diverges")
    drive = float(np.linalg.norm(q @ fm.r.T, axis=1).max())
    if drive == 0.0:
        zeta = np.zeros(fm.m.shape[0])
        return EstimatorOutput(PhaseSpacePoint(zeta), 0, 0.0)
    j_needed = int(np.ceil(np.log(tol * (1.0 - r) / drive) / np.log(r)))
    j_needed = max(j_needed, 0)
    if j_needed > q.shape[0] - 1:
        raise RecordTooShortError(required=n + j_needed + 1, available=n + q.shape[0], tol=tol)
    zeta = np.zeros(fm.m.shape[0])
    for j in range(j_needed, -1, -1):  # Horner form: M (M (...) + R q_{j+1}) + R q_j
        zeta = fm.m @ zeta + fm.r @ q[j]
    q_max = float(np.linalg.norm(q, axis=1).max())
    tail = certified_tail(fm, j_needed, q_max)
    return EstimatorOutput(PhaseSpacePoint(zeta), j_needed, tail)


def mle_sequence(record, fm: FilterMatrices, n_max: int | None = None) -> np.ndarray:
    """All shifts zeta_hat_0..zeta_hat_{n_max} by one backward sweep of the record.

    Uses the anchored recursion zeta_hat_n = R q_n + M zeta_hat_{n+1}; the
    truncation error at index n is O(||M^{N-n}||) for a length-N record, so
    keep n_max well below N.  Returns an (n_max + 1, 2d) array.
    """
    q = _outcomes(record)
    n_rec = q.shape[0]
    if n_max is None:
        n_max = n_rec - 1
    if n_max >= n_rec:
        raise ValueError(f"n_max={n_max} exceeds record length {n_rec}")
    zeta = np.zeros(fm.m.shape[0])
    out = np.empty((n_max + 1, fm.m.shape[0]))
    for n in range(n_rec - 1, -1, -1):
        zeta = fm.r @ q[n] + fm.m @ zeta
        if n <= n_max:
            out[n] = zeta
    return out


def residuals(record, zeta_hats: np.ndarray) -> np.ndarray:
    """Innovations eta_hat_n = q_n - xi_hat_n for a sequence of shifted estimates."""
    q = _outcomes(record)
    zh = np.atleast_2d(np.asarray(zeta_hats, float))
    if zh.shape[0] > q.shape[0]:
        raise ValueError("more estimates than outcomes")
    d = q.shape[1]
    return q[: zh.shape[0]] - zh[:, :d]


def _born_density(init: InitialStateSpec, w_hat: SqueezingMatrix, zeta: np.ndarray) -> float:
    dens = 0.0
    for weight, mean, cov in born_components(init, w_hat):
        dens += weight * float(GaussianDensity(cov).pdf(zeta - mean))
    return dens


def rn_weight(
    rho: InitialStateSpec,
    tau: InitialStateSpec,
    zeta_hat: PhaseSpacePoint | np.ndarray,
    w_hat: SqueezingMatrix,
) -> float:
    """Likelihood ratio of two initial states given the reconstructed label.

    Equals <W_hat, zeta_hat| rho |W_hat, zeta_hat> / <W_hat, zeta_hat| tau |W_hat, zeta_hat>;
    this is the density of the record law of rho relative to that of tau.
    The reference tau must put mass near zeta_hat (wide mixtures do).
    """
    z = zeta_hat.vec if isinstance(zeta_hat, PhaseSpacePoint) else np.asarray(zeta_hat, float)
    num = _born_density(rho, w_hat, z)
    den = _born_density(tau, w_hat, z)
    if den <= 0.0 or not np.isfinite(den):
        raise ZeroDivisionError(
            "reference state has vanishing coherent-label density at zeta_hat; "
            "use a wider mixture"
        )
    return num / den


def _component_log_likelihoods(
    init: InitialStateSpec, outcomes: np.ndarray, model: ModelSpec, n_max: int
) -> np.ndarray:
    """log ||W_n |psi_i>||^2 for each component i and each n <= n_max, shape (n_comp, n_max+1).

    Iterates the exact coherent-state measurement/propagation maps; the
    outcome weights are Gaussian densities accumulated as log sums.
    """
    logs = np.empty((len(init.states), n_max + 1))
    for i, comp in enumerate(init.states):
        state = comp
        acc = 0.0
        for n in range(n_max + 1):
            state, weight = apply_measurement(outcomes[n], model, state)
            acc += float(np.log(weight))
            logs[i, n] = acc
            state = evolve_forward(model, state)
    return logs


def povm_ratio_sequence(
    rho: InitialStateSpec,
    tau: InitialStateSpec,
    record,
    model: ModelSpec,
    stable: StableSqueezing,
    n_max: int,
    fm: FilterMatrices | None = None,
) -> dict:
    """Finite-n likelihood ratios M_n = rho(W_n^* W_n) / tau(W_n^* W_n) and their limit.

    Returns a dict with ``log_ratios`` (n_max + 1 values, always finite),
    ``ratios`` (exponentials, may underflow to 0 for extreme records), and
    ``limit``: the ratio of coherent-label densities at the full-record
    maximum-likelihood label.
    """
    q = _outcomes(record)
    if n_max >= q.shape[0]:
        raise ValueError(f"n_max={n_max} exceeds record length {q.shape[0]}")
    logs_rho = _component_log_likelihoods(rho, q, model, n_max)
    logs_tau = _component_log_likelihoods(tau, q, model, n_max)
    lw_rho = np.log(np.asarray(rho.weights))[:, np.newaxis]
    lw_tau = np.log(np.asarray(tau.weights))[:, np.newaxis]
    log_num = logsumexp(lw_rho + logs_rho, axis=0)
    log_den = logsumexp(lw_tau + logs_tau, axis=0)
    log_ratios = log_num - log_den
    if not np.all(np.isfinite(log_ratios)):
        raise FloatingPointError("log-domain likelihood ratio became non-finite")
    limit = None
    if fm is not None:
        zeta_hat = mle_sequence(record, fm, 0)[0]
        limit = rn_weight(rho, tau, zeta_hat, stable.w_hat)
    return {"log_ratios": log_ratios, "ratios": np.exp(log_ratios), "limit": limit}
