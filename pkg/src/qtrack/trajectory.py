"""The phase-space process equivalent in law to the measurement record.

For a model (S, Sigma) with stable squeezing W_hat and gain K, the process

    zeta_{n+1} = S (zeta_n - K eta_n),      eta_n iid N(0, Sigma - (2 Im W_hat)^{-1}),

with zeta_0 drawn from the coherent-label (Husimi-type) density
<W_hat, zeta| rho |W_hat, zeta> dlambda(zeta), reproduces the joint law of the
measurement outcomes exactly:

    (Q_0, Q_1, ...)  =law=  (xi_0 + eta_0, xi_1 + eta_1, ...),  xi_n = [zeta_n].

This module samples the process, provides the deterministic forward/backward
label recursions driven by a fixed record,

    zeta_{k+1} = S (zeta_k - K (q_k - xi_k))  <=>  zeta_{k+1} = M^{-1} zeta_k - M^{-1} R q_k,
    zeta_k     = M zeta_{k+1} + R q_k,
    zeta_k     = M^{-k} zeta_0 - sum_{j<k} M^{-k+j} R q_j,

and evaluates the record density ("master formula")

    p(q_0..q_n) = integral prod_k N(q_k - xi_k; Sigma - (2 Im W_hat)^{-1})
                  <W_hat, zeta| rho |W_hat, zeta> dlambda(zeta)

by Gauss-Hermite quadrature against the Gaussian label density of a
coherent-state mixture (d = 1), or by Monte Carlo in higher dimension.

Randomness is drawn from counter-based Philox streams keyed by
(seed, trajectory index), so every trajectory is independently reproducible
and ensembles merge deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coherent import CoherentState, wigner_covariance
from .filters import FilterMatrices
from .gaussian import GaussianDensity
from .phase_space import ModelSpec, PhaseSpacePoint, SymplecticMatrix
from .squeezing import StableSqueezing

__all__ = [
    "MeasurementRecord",
    "TrajectorySample",
    "InitialStateSpec",
    "philox_stream",
    "born_components",
    "sample_initial",
    "sample_initial_batch",
    "step",
    "simulate",
    "simulate_ensemble",
    "forward_recursion",
    "backward_recursion",
    "explicit_zetas",
    "master_density",
]


def philox_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based RNG stream keyed by (seed, stream index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class MeasurementRecord:
    """A finite outcome sequence q_0..q_{n-1} with its provenance."""

    outcomes: np.ndarray  # (n, d)
    seed: int
    model_id: str

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.outcomes, float))
        if q.ndim != 2 or q.shape[0] < 1:
            raise ValueError("record needs at least one outcome of shape (n, d)")
        if not np.all(np.isfinite(q)):
            raise ValueError("record has non-finite outcomes")
        q = np.array(q)
        q.flags.writeable = False
        object.__setattr__(self, "outcomes", q)

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    @property
    def d(self) -> int:
        return self.outcomes.shape[1]


@dataclass(frozen=True)
class TrajectorySample:
    """A sampled trajectory: labels zeta_k, innovations eta_k, outcomes q_k.

    Satisfies zeta_{k+1} = S (zeta_k - K eta_k) and q_k = xi_k + eta_k by
    construction.
    """

    zetas: np.ndarray  # (n, 2d)
    etas: np.ndarray  # (n, d)
    record: MeasurementRecord


@dataclass(frozen=True)
class InitialStateSpec:
    """A density matrix given as a convex mixture of coherent states."""

    weights: tuple
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.size != len(self.states) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to one")
        d = self.states[0].d
        if any(s.d != d for s in self.states):
            raise ValueError("all components must share the same dimension")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "states", tuple(self.states))

    @classmethod
    def coherent(cls, state: CoherentState) -> "InitialStateSpec":
        return cls((1.0,), (state,))

    @classmethod
    def mixture(cls, pairs) -> "InitialStateSpec":
        weights, states = zip(*pairs)
        return cls(tuple(weights), tuple(states))

    @property
    def d(self) -> int:
        return self.states[0].d


def born_components(init: InitialStateSpec, w_hat) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Gaussian decomposition of the coherent-label density of ``init``.

    For each component |W_i, zeta_i> the label zeta drawn through the POVM of
    W_hat is N(zeta_i, G_{W_i} + G_{W_hat}) with G the phase-space covariance
    of the corresponding packet.  Returns (weight, mean, covariance) triples.
    """
    g_probe = wigner_covariance(w_hat)
    out = []
    for p, comp in zip(init.weights, init.states):
        cov = wigner_covariance(comp.w) + g_probe
        out.append((p, comp.zeta.vec.copy(), cov))
    return out


def sample_initial(
    init: InitialStateSpec, stable: StableSqueezing, rng: np.random.Generator
) -> PhaseSpacePoint:
    """One draw of zeta_0 from the coherent-label density of ``init``."""
    return PhaseSpacePoint(sample_initial_batch(init, stable, rng, 1)[0])


def sample_initial_batch(
    init: InitialStateSpec, stable: StableSqueezing, rng: np.random.Generator, n: int
) -> np.ndarray:
    """Vectorized initial sampling; returns an (n, 2d) array.

    Draw order per sample: one uniform for the mixture component, then 2d
    standard normals, so the stream layout does not depend on the mixture size.
    """
    comps = born_components(init, stable.w_hat)
    weights = np.array([c[0] for c in comps])
    chols = [np.linalg.cholesky(c[2]) for c in comps]
    means = [c[1] for c in comps]
    u = rng.random(n)
    z = rng.standard_normal((n, 2 * init.d))
    idx = np.searchsorted(np.cumsum(weights), u, side="right")
    idx = np.minimum(idx, len(comps) - 1)
    out = np.empty((n, 2 * init.d))
    for i in range(len(comps)):
        mask = idx == i
        if np.any(mask):
            out[mask] = means[i] + z[mask] @ chols[i].T
    return out


def step(
    z: PhaseSpacePoint, eta: np.ndarray, fm: FilterMatrices, s: SymplecticMatrix
) -> PhaseSpacePoint:
    """One process step zeta -> S (zeta - K eta)."""
    eta = np.atleast_1d(np.asarray(eta, float))
    return PhaseSpacePoint(s.matrix @ (z.vec - fm.k @ eta))


def simulate(
    model: ModelSpec,
    stable: StableSqueezing,
    fm: FilterMatrices,
    init: InitialStateSpec,
    n_steps: int,
    seed: int,
    stream: int = 0,
) -> TrajectorySample:
    """Sample one trajectory of n_steps measurements, deterministic in (seed, stream)."""
    out = simulate_ensemble(model, stable, fm, init, n_steps, 1, seed, first_stream=stream)
    record = MeasurementRecord(out["q"][0], seed=seed, model_id=model.model_id())
    return TrajectorySample(zetas=out["zetas"][0], etas=out["etas"][0], record=record)


def simulate_ensemble(
    model: ModelSpec,
    stable: StableSqueezing,
    fm: FilterMatrices,
    init: InitialStateSpec,
    n_steps: int,
    n_traj: int,
    seed: int,
    first_stream: int = 0,
) -> dict:
    """Simulate a reproducible ensemble; returns arrays q, zetas, etas, xis.

    Trajectory i uses the Philox stream (seed, first_stream + i); the dynamics
    itself is evaluated vectorized across the ensemble.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    d = model.d
    noise = GaussianDensity(stable.noise_cov)
    z0 = np.empty((n_traj, 2 * d))
    eta_std = np.empty((n_traj, n_steps, d))
    for i in range(n_traj):
        rng = philox_stream(seed, first_stream + i)
        z0[i] = sample_initial_batch(init, stable, rng, 1)[0]
        eta_std[i] = rng.standard_normal((n_steps, d))
    etas = eta_std @ noise.chol.T

    s_mat = model.s.matrix
    k_mat = fm.k
    zetas = np.empty((n_traj, n_steps, 2 * d))
    q = np.empty((n_traj, n_steps, d))
    z = z0
    for k in range(n_steps):
        zetas[:, k] = z
        q[:, k] = z[:, :d] + etas[:, k]
        z = (z - etas[:, k] @ k_mat.T) @ s_mat.T
    return {"q": q, "zetas": zetas, "etas": etas, "xis": zetas[:, :, :d]}


def forward_recursion(
    zeta0: np.ndarray, outcomes: np.ndarray, fm: FilterMatrices, s: SymplecticMatrix
) -> np.ndarray:
    """Labels zeta_0..zeta_n driven by a fixed record via the gain recursion."""
    outcomes = np.atleast_2d(np.asarray(outcomes, float))
    n, d = outcomes.shape
    zetas = np.empty((n + 1, 2 * d))
    zetas[0] = np.asarray(zeta0, float)
    for k in range(n):
        innov = outcomes[k] - zetas[k, :d]
        zetas[k + 1] = s.matrix @ (zetas[k] - fm.k @ innov)
    return zetas


def backward_recursion(
    zeta_final: np.ndarray, outcomes: np.ndarray, fm: FilterMatrices, s: SymplecticMatrix
) -> np.ndarray:
    """Invert the forward recursion: zeta_k = M zeta_{k+1} + R q_k, exactly."""
    outcomes = np.atleast_2d(np.asarray(outcomes, float))
    n, d = outcomes.shape
    zetas = np.empty((n + 1, 2 * d))
    zetas[n] = np.asarray(zeta_final, float)
    for k in range(n - 1, -1, -1):
        zetas[k] = fm.m @ zetas[k + 1] + fm.r @ outcomes[k]
    return zetas


def explicit_zetas(zeta0: np.ndarray, outcomes: np.ndarray, fm: FilterMatrices) -> np.ndarray:
    """Closed form zeta_k = M^{-k} zeta_0 - sum_{j<k} M^{-k+j} R q_j.

    M^{-k} grows geometrically, so this is a consistency oracle for small k
    rather than a production path.
    """
    outcomes = np.atleast_2d(np.asarray(outcomes, float))
    n, d = outcomes.shape
    m_inv = np.linalg.inv(fm.m)
    zetas = np.empty((n + 1, 2 * d))
    zetas[0] = np.asarray(zeta0, float)
    for k in range(1, n + 1):
        acc = np.linalg.matrix_power(m_inv, k) @ zetas[0]
        for j in range(k):
            acc = acc - np.linalg.matrix_power(m_inv, k - j) @ (fm.r @ outcomes[j])
        zetas[k] = acc
    return zetas


def _master_log_density_batch(
    init: InitialStateSpec,
    stable: StableSqueezing,
    fm: FilterMatrices,
    outcomes: np.ndarray,
    model: ModelSpec,
    n_nodes: int,
    rng: np.random.Generator | None,
    mc_draws: int,
) -> np.ndarray:
    """log p(q_0..q_n) for a batch of records, shape (m, n, d) -> (m,)."""
    from scipy.special import logsumexp

    outcomes = np.asarray(outcomes, float)
    m_rec, n, d = outcomes.shape
    noise = GaussianDensity(stable.noise_cov)
    s_mat, k_mat = model.s.matrix, fm.k

    comps = born_components(init, stable.w_hat)
    per_comp = []
    for weight, mean, cov in comps:
        if d == 1:
            nodes, gh_w = np.polynomial.hermite_e.hermegauss(n_nodes)
            grid = np.stack(np.meshgrid(nodes, nodes, indexing="ij"), axis=-1).reshape(-1, 2)
            logw = np.log(np.outer(gh_w, gh_w).ravel()) - 0.5 * grid.shape[1] * np.log(2 * np.pi)
            chol = np.linalg.cholesky(cov)
            zeta_nodes = mean + grid @ chol.T
        else:
            if rng is None:
                rng = philox_stream(0, 0)
            zeta_nodes = mean + GaussianDensity(cov).sample(rng, mc_draws)
            logw = np.full(mc_draws, -np.log(mc_draws))
        # run the affine recursion for all (records, nodes) jointly
        z = np.broadcast_to(zeta_nodes, (m_rec,) + zeta_nodes.shape).copy()
        loglik = np.zeros((m_rec, zeta_nodes.shape[0]))
        for k in range(n):
            innov = outcomes[:, k, np.newaxis, :] - z[..., :d]
            loglik += noise.logpdf(innov)
            z = (z - innov @ k_mat.T) @ s_mat.T
        per_comp.append(np.log(weight) + logsumexp(loglik + logw, axis=1))
    return logsumexp(np.stack(per_comp, axis=0), axis=0)


def master_density(
    init: InitialStateSpec,
    stable: StableSqueezing,
    fm: FilterMatrices,
    record,
    model: ModelSpec,
    n_nodes: int = 40,
    rng: np.random.Generator | None = None,
    mc_draws: int = 100000,
) -> float:
    """Record density p(q_0..q_n) of the measurement process started from ``init``.

    Uses tensor Gauss-Hermite quadrature in the label zeta for d = 1 (the Born
    density of a coherent mixture is a Gaussian mixture) and Monte Carlo with
    ``mc_draws`` label samples otherwise.  Always non-negative; integrates to
    one over records.
    """
    outcomes = record.outcomes if isinstance(record, MeasurementRecord) else np.atleast_2d(record)
    batch = outcomes[np.newaxis, ...]
    log_p = _master_log_density_batch(init, stable, fm, batch, model, n_nodes, rng, mc_draws)
    return float(np.exp(log_p[0]))
