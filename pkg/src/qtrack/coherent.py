"""Gaussian wave packets (coherent states) and their exact measurement dynamics.

A coherent state |W, zeta> with squeezing matrix W (complex symmetric,
Im W > 0) and phase-space center zeta = (xi, pi) has the position wave function

    phi(x) = (2 pi)^{-d/4} det(2 Im W)^{1/4}
             exp[ (i/2) (x - xi)^t W (x - xi) + i x^t pi ],

the unique normalized solution (up to phase) of
(P - pi - W (X - xi)) |W, zeta> = 0.  This module implements the closed-form
action of the one-step propagator and of the Gaussian measurement kernel on
these states, pairwise overlaps, the phase-space partition of unity

    integral |W, zeta><W, zeta| d^{2d}zeta / (2 pi)^d = 1,

and the Gaussian label-noise laws of the coherent-state POVM.  Every "up to a
phase" identity is exercised through |overlap| in the tests; the global phase
of phi itself is fixed exactly by the formula above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianDensity
from .phase_space import ModelSpec, PhaseSpacePoint
from .squeezing import SqueezingMatrix, backward_squeezing_map, forward_squeezing_map

__all__ = [
    "CoherentState",
    "Superposition",
    "GaussianLaw",
    "wavefunction",
    "evolve_backward",
    "evolve_forward",
    "apply_measurement",
    "overlap",
    "label_amplitudes",
    "partition_of_unity_check",
    "marginal_laws",
    "wigner_covariance",
    "label_noise_cov",
]

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CoherentState:
    """A coherent state |W, zeta>."""

    w: SqueezingMatrix
    zeta: PhaseSpacePoint

    def __post_init__(self):
        if self.w.d != self.zeta.d:
            raise ValueError(f"squeezing is {self.w.d}-dim but center is {self.zeta.d}-dim")

    @property
    def d(self) -> int:
        return self.w.d


@dataclass(frozen=True)
class Superposition:
    """A normalized finite superposition sum_i c_i |W_i, zeta_i>."""

    coefficients: tuple
    states: tuple

    def __post_init__(self):
        if len(self.coefficients) != len(self.states) or not self.states:
            raise ValueError("need one coefficient per component state")
        object.__setattr__(self, "coefficients", tuple(complex(c) for c in self.coefficients))
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def d(self) -> int:
        return self.states[0].d

    @classmethod
    def normalized(cls, coefficients, states) -> "Superposition":
        """Build a superposition and rescale the coefficients to unit norm."""
        raw = cls(tuple(coefficients), tuple(states))
        gram = np.array(
            [[overlap(a, b) for b in raw.states] for a in raw.states], dtype=complex
        )
        c = np.asarray(raw.coefficients, complex)
        norm2 = float(np.real(np.conj(c) @ gram @ c))
        if norm2 <= 0:
            raise ValueError("superposition has zero norm")
        return cls(tuple(c / np.sqrt(norm2)), raw.states)


def wavefunction(state: CoherentState, x: np.ndarray) -> np.ndarray:
    """Evaluate phi(x | W, zeta); vectorized over x of shape (..., d) or (n,) when d=1."""
    d = state.d
    x = np.asarray(x, float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., np.newaxis]
    if x.shape[-1] != d:
        raise ValueError(f"x must have trailing dimension {d}")
    xi, pi = state.zeta.xi, state.zeta.pi
    w = state.w.w
    dx = x - xi
    quad = np.einsum("...i,ij,...j->...", dx, w, dx)
    phase = np.exp(0.5j * quad + 1j * (x @ pi))
    amp = _TWO_PI ** (-d / 4.0) * np.linalg.det(2.0 * state.w.im) ** 0.25
    return amp * phase


def evolve_backward(model: ModelSpec, state: CoherentState) -> CoherentState:
    """One backward step: |W, zeta> -> |g(W), S^{-1} zeta| up to a phase."""
    w_new = backward_squeezing_map(state.w.w, model)
    zeta_new = model.s.inverse().matrix @ state.zeta.vec
    return CoherentState(SqueezingMatrix(w_new), PhaseSpacePoint(zeta_new))


def evolve_forward(model: ModelSpec, state: CoherentState) -> CoherentState:
    """One forward step of the propagator; inverse of :func:`evolve_backward`."""
    w_new = forward_squeezing_map(state.w.w, model)
    zeta_new = model.s.matrix @ state.zeta.vec
    return CoherentState(SqueezingMatrix(w_new), PhaseSpacePoint(zeta_new))


def apply_measurement(
    q: np.ndarray, model: ModelSpec, state: CoherentState
) -> tuple[CoherentState, float]:
    """Collapse |W, zeta> under the Gaussian position kernel centered at ``q``.

    Returns the post-measurement coherent state and the outcome density

        weight = ||V_q |W, zeta>||^2 = N(q - xi; Sigma + (2 Im W)^{-1}),

    which integrates to one over q.  The squeezing sharpens to
    W + (i/2) Sigma^{-1} and the center moves by the Bayesian update
    (1; Re W) (2 Im W)^{-1} Xi^{-1} (q - xi) with Xi = Sigma + (2 Im W)^{-1}.
    """
    q = np.atleast_1d(np.asarray(q, float))
    w = state.w
    inv_2im = np.linalg.inv(2.0 * w.im)
    xi_cov = model.sigma + inv_2im
    innovation = q - state.zeta.xi
    stack = np.vstack([np.eye(state.d), w.re])
    shift = stack @ inv_2im @ np.linalg.solve(xi_cov, innovation)
    w_new = SqueezingMatrix(w.w + 0.5j * model.sigma_inv)
    zeta_new = PhaseSpacePoint(state.zeta.vec + shift)
    weight = float(GaussianDensity(xi_cov).pdf(innovation))
    return CoherentState(w_new, zeta_new), weight


def _det_inv_sqrt(m: np.ndarray) -> complex:
    """det(M)^{-1/2} for complex symmetric M with positive-definite real part.

    Computed as the product of principal square roots of the eigenvalues,
    which all lie in the right half plane.
    """
    if m.shape == (1, 1):
        return 1.0 / np.sqrt(m[0, 0])
    eigs = np.linalg.eigvals(m)
    return complex(1.0 / np.prod(np.sqrt(eigs)))


def overlap(a: CoherentState, b: CoherentState) -> complex:
    """Closed-form inner product <a | b> with the exact phase convention.

    The integrand is a Gaussian; completing the square with
    M = -i (W_b - conj(W_a)) (whose real part is Im W_a + Im W_b > 0) gives

        <a|b> = [det(2 Im W_a) det(2 Im W_b)]^{1/4} det(M)^{-1/2}
                exp( (1/2) J^t M^{-1} J + c ),

    with J and c the linear and constant parts of the exponent.
    """
    if a.d != b.d:
        raise ValueError("states live in different dimensions")
    wa, wb = a.w.w, b.w.w
    xa, pa, xb, pb = a.zeta.xi, a.zeta.pi, b.zeta.xi, b.zeta.pi
    m = -1j * (wb - wa.conj())
    j = 1j * (pb - pa) - 1j * (wb @ xb - wa.conj() @ xa)
    c = 0.5j * (xb @ wb @ xb - xa @ wa.conj() @ xa)
    pref = (np.linalg.det(2.0 * a.w.im) * np.linalg.det(2.0 * b.w.im)) ** 0.25
    quad = 0.5 * (j @ np.linalg.solve(m, j))
    return complex(pref * _det_inv_sqrt(m) * np.exp(quad + c))


def label_amplitudes(w: SqueezingMatrix, zetas: np.ndarray, psi) -> np.ndarray:
    """<W, zeta | psi> for an array of labels zeta, shape (n, 2d).

    ``psi`` may be a CoherentState or a Superposition.  This is the amplitude
    whose squared modulus, against the Liouville measure d^{2d}zeta/(2 pi)^d,
    is the coherent-state POVM density of psi.
    """
    zetas = np.atleast_2d(np.asarray(zetas, float))
    d = w.d
    if zetas.shape[1] != 2 * d:
        raise ValueError(f"labels must have shape (n, {2*d})")
    if isinstance(psi, CoherentState):
        comps = [(1.0 + 0j, psi)]
    else:
        comps = list(zip(psi.coefficients, psi.states))
    xa, pa = zetas[:, :d], zetas[:, d:]
    wa_c = w.w.conj()
    total = np.zeros(zetas.shape[0], dtype=complex)
    for coeff, comp in comps:
        wb = comp.w.w
        xb, pb = comp.zeta.xi, comp.zeta.pi
        m = -1j * (wb - wa_c)
        m_inv = np.linalg.inv(m)
        pref = (np.linalg.det(2.0 * w.im) * np.linalg.det(2.0 * comp.w.im)) ** 0.25
        pref = pref * _det_inv_sqrt(m)
        j = (
            1j * (pb[np.newaxis, :] - pa)
            - 1j * (wb @ xb)[np.newaxis, :]
            + 1j * (xa @ wa_c.T)
        )
        c = 0.5j * (xb @ wb @ xb - np.einsum("ni,ij,nj->n", xa, wa_c, xa))
        quad = 0.5 * np.einsum("ni,ij,nj->n", j, m_inv, j)
        total += coeff * pref * np.exp(quad + c)
    return total


def wigner_covariance(w: SqueezingMatrix) -> np.ndarray:
    """Full 2d x 2d phase-space covariance of the packet |W, 0>.

    Position block (2 Im W)^{-1}, momentum block (Im W + Re W (Im W)^{-1} Re W)/2,
    cross block (2 Im W)^{-1} Re W.  This is also the covariance of the label
    noise added by the coherent-state POVM built from W.
    """
    a_, b_ = w.re, w.im
    c = np.linalg.inv(2.0 * b_)
    pp = 0.5 * (b_ + a_ @ np.linalg.solve(b_, a_))
    xp = c @ a_
    return np.block([[c, xp], [xp.T, pp]])


#: Alias emphasizing the POVM-noise reading of the same matrix.
label_noise_cov = wigner_covariance


@dataclass(frozen=True)
class GaussianLaw:
    """A Gaussian law N(mean, covariance) with a PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, float))
        cov = np.atleast_2d(np.asarray(self.cov, float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if np.linalg.norm(cov - cov.T) > 1e-10 * max(1.0, np.linalg.norm(cov)):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-12:
            raise ValueError("covariance must be positive semi-definite")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def density(self, x: np.ndarray) -> np.ndarray:
        return GaussianDensity(self.cov).pdf(np.asarray(x, float) - self.mean)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + GaussianDensity(self.cov).sample(rng, n)


def marginal_laws(state: CoherentState) -> tuple[GaussianLaw, GaussianLaw]:
    """Label-noise marginals of the coherent-state POVM built from this W.

    When phase-space labels are read off a system through the POVM
    |W, zeta><W, zeta| dlambda(zeta), the position label is distributed as
    X + Z_x and the momentum label as P + Z_p, where X, P follow the system's
    spectral measures and the independent noises have

        cov(Z_x) = (2 Im W)^{-1},
        cov(Z_p) = (Im W + Re W (Im W)^{-1} Re W) / 2.

    The momentum factor is fixed by a momentum-histogram cross-check against
    the brute-force grid propagator (see the test suite); note it equals one
    quarter of 2 Im W + 2 Re W (Im W)^{-1} Re W.  Returned laws are centered at
    the state's own (xi, pi), the label means when the system is |W, zeta>.
    """
    g = wigner_covariance(state.w)
    d = state.d
    return (
        GaussianLaw(state.zeta.xi, g[:d, :d]),
        GaussianLaw(state.zeta.pi, g[d:, d:]),
    )


def _component_box(w: SqueezingMatrix, psi, pad_sigmas: float) -> tuple[tuple, tuple]:
    comps = [psi] if isinstance(psi, CoherentState) else list(psi.states)
    g_probe = wigner_covariance(w)
    d = w.d
    lo_xi, hi_xi = np.inf, -np.inf
    lo_pi, hi_pi = np.inf, -np.inf
    for comp in comps:
        g = wigner_covariance(comp.w) + g_probe
        sx = np.sqrt(np.diag(g[:d, :d]).max())
        sp = np.sqrt(np.diag(g[d:, d:]).max())
        lo_xi = min(lo_xi, comp.zeta.xi.min() - pad_sigmas * sx)
        hi_xi = max(hi_xi, comp.zeta.xi.max() + pad_sigmas * sx)
        lo_pi = min(lo_pi, comp.zeta.pi.min() - pad_sigmas * sp)
        hi_pi = max(hi_pi, comp.zeta.pi.max() + pad_sigmas * sp)
    return (lo_xi, hi_xi), (lo_pi, hi_pi)


def partition_of_unity_check(
    w: SqueezingMatrix,
    test_states,
    n_nodes: int = 160,
    pad_sigmas: float = 8.0,
    xi_box: tuple | None = None,
    pi_box: tuple | None = None,
) -> float:
    """Quadrature check of the partition of unity for d = 1.

    For each test state psi computes | integral |<W, zeta|psi>|^2 dlambda - 1 |
    with tensor Gauss-Legendre quadrature over a zeta-box covering
    ``pad_sigmas`` standard deviations of every relevant Gaussian, and returns
    the maximum deviation.  A caller-supplied box that misses the states
    simply yields a deviation near one (the integral is then near zero).
    """
    if w.d != 1:
        raise ValueError("partition-of-unity quadrature is implemented for d = 1 only")
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    worst = 0.0
    for psi in test_states:
        bx, bp = _component_box(w, psi, pad_sigmas)
        if xi_box is not None:
            bx = xi_box
        if pi_box is not None:
            bp = pi_box
        xi = 0.5 * (bx[1] - bx[0]) * nodes + 0.5 * (bx[1] + bx[0])
        wi = 0.5 * (bx[1] - bx[0]) * weights
        pi = 0.5 * (bp[1] - bp[0]) * nodes + 0.5 * (bp[1] + bp[0])
        wp = 0.5 * (bp[1] - bp[0]) * weights
        zx, zp = np.meshgrid(xi, pi, indexing="ij")
        zetas = np.column_stack([zx.ravel(), zp.ravel()])
        amp = label_amplitudes(w, zetas, psi)
        dens = np.abs(amp) ** 2 / _TWO_PI
        total = float(np.outer(wi, wp).ravel() @ dens)
        worst = max(worst, abs(total - 1.0))
    return worst
