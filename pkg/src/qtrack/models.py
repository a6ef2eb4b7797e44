"""Stock measurement models: free particle, harmonic oscillator, magnetic field.

Each builder returns a validated ``ModelSpec``.  The one-step maps come from
exponentiating the Hamiltonian generator over one unit of time; closed forms
are used and cross-checked against the matrix exponential in the test suite.
"""

from __future__ import annotations

import numpy as np

from .phase_space import ModelSpec, SymplecticMatrix, make_symplectic

__all__ = [
    "free_particle",
    "harmonic_oscillator",
    "magnetic_field",
    "free_particle_generator",
    "harmonic_oscillator_generator",
    "magnetic_field_generator",
]


def free_particle_generator(mass: float, d: int = 1) -> np.ndarray:
    """Generator of H = P^2 / (2M): positions drift with velocity P/M."""
    L = np.zeros((2 * d, 2 * d))
    L[:d, d:] = np.eye(d) / mass
    return L


def harmonic_oscillator_generator(omega: float, d: int = 1) -> np.ndarray:
    """Generator of H = (omega/2)(P^2 + X^2): rotation of phase space."""
    L = np.zeros((2 * d, 2 * d))
    L[:d, d:] = omega * np.eye(d)
    L[d:, :d] = -omega * np.eye(d)
    return L


def magnetic_field_generator(beta: float, mass: float) -> np.ndarray:
    """Planar charged particle in a constant transverse magnetic field (d=2).

    beta = B / (2M) is half the cyclotron frequency.
    """
    m_inv = 1.0 / mass
    return np.array(
        [
            [0.0, -beta, m_inv, 0.0],
            [beta, 0.0, 0.0, m_inv],
            [-(beta**2) * mass, 0.0, 0.0, -beta],
            [0.0, -(beta**2) * mass, beta, 0.0],
        ]
    )


def free_particle(mass: float = 1.0, lam: float = 1.0, d: int = 1) -> ModelSpec:
    """Free particle: S = [[1, 1/M], [0, 1]], Sigma = lam^2 * 1."""
    eye = np.eye(d)
    s = make_symplectic(eye, eye / mass, 0 * eye, eye)
    return ModelSpec(d=d, s=s, sigma=lam**2 * eye)


def harmonic_oscillator(omega: float, lam: float = 1.0, d: int = 1) -> ModelSpec:
    """Harmonic oscillator: one step rotates phase space by the angle omega."""
    eye = np.eye(d)
    c, s_ = np.cos(omega), np.sin(omega)
    s = make_symplectic(c * eye, s_ * eye, -s_ * eye, c * eye)
    return ModelSpec(d=d, s=s, sigma=lam**2 * eye)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def magnetic_field(beta: float, mass: float, lam: float = 1.0) -> ModelSpec:
    """Magnetic-field model in d=2, in closed form S = S_hat (x) R(beta).

    S_hat is the 2x2 map [[cos b, sin b / (M b)], [-M b sin b, cos b]] and
    R(beta) the planar rotation; each d x d block of S is (S_hat block) * R(beta).
    The position-measurement map S_xp is singular when beta is a multiple of pi.
    """
    c, s = np.cos(beta), np.sin(beta)
    mb = mass * beta
    rot = _rotation(beta)
    s_hat = np.array([[c, s / mb], [-mb * s, c]])
    blocks = [s_hat[0, 0] * rot, s_hat[0, 1] * rot, s_hat[1, 0] * rot, s_hat[1, 1] * rot]
    sym = make_symplectic(*blocks)
    return ModelSpec(d=2, s=sym, sigma=lam**2 * np.eye(2))


def magnetic_carrier(beta: float, mass: float) -> SymplecticMatrix:
    """The 2x2 factor S_hat of the magnetic-field map (for structure checks)."""
    c, s = np.cos(beta), np.sin(beta)
    mb = mass * beta
    return make_symplectic(
        np.array([[c]]), np.array([[s / mb]]), np.array([[-mb * s]]), np.array([[c]])
    )
