"""Phase-space points, symplectic one-step maps, and model definitions.

The classical phase space of a particle in d dimensions is Gamma = R^d_x + R^d_p,
with points zeta = (xi, pi) stored as flat length-2d vectors in (position,
momentum) block order.  One time step of any quadratic-Hamiltonian dynamics is
a real symplectic matrix

    S = [[S_xx, S_xp],
         [S_px, S_pp]],      S J S^t = J,     J = [[0, 1], [-1, 0]],

equivalently the block identities

    S_xx S_xp^t = S_xp S_xx^t,   S_px S_pp^t = S_pp S_px^t,
    S_xx S_pp^t - S_xp S_px^t = 1.

A measurement model is the pair (S, Sigma): S propagates the particle for one
time step, and Sigma is the positive-definite covariance of the Gaussian
position-measurement kernel applied at the start of each step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = [
    "SymplecticityError",
    "PhaseSpacePoint",
    "SymplecticMatrix",
    "ModelSpec",
    "symplectic_form",
    "make_symplectic",
    "generator_to_group",
    "apply",
]

#: Relative tolerance on ||S J S^t - J|| used to accept a symplectic matrix.
SYMPLECTIC_TOL = 1e-12


class SymplecticityError(ValueError):
    """Raised when a matrix fails the symplectic (or generator) condition.

    The offending residual is stored in ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def symplectic_form(d: int) -> np.ndarray:
    """Canonical form J = [[0, 1_d], [-1_d, 0]] on R^{2d}."""
    j = np.zeros((2 * d, 2 * d))
    j[:d, d:] = np.eye(d)
    j[d:, :d] = -np.eye(d)
    return j


def _frozen(a: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PhaseSpacePoint:
    """A point zeta = (xi, pi) in phase space, stored flat as (xi, pi)."""

    vec: np.ndarray

    def __post_init__(self):
        v = _frozen(self.vec)
        if v.ndim != 1 or v.size % 2 != 0 or v.size == 0:
            raise ValueError(f"phase-space vector must be flat of even length, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("phase-space vector has non-finite entries")
        object.__setattr__(self, "vec", v)

    @classmethod
    def from_xi_pi(cls, xi, pi) -> "PhaseSpacePoint":
        return cls(np.concatenate([np.atleast_1d(np.asarray(xi, float)),
                                   np.atleast_1d(np.asarray(pi, float))]))

    @property
    def d(self) -> int:
        return self.vec.size // 2

    @property
    def xi(self) -> np.ndarray:
        """Position block; this is also the projection [zeta]."""
        return self.vec[: self.d]

    @property
    def pi(self) -> np.ndarray:
        return self.vec[self.d:]


@dataclass(frozen=True)
class SymplecticMatrix:
    """A validated real symplectic 2d x 2d matrix with named blocks."""

    matrix: np.ndarray
    residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = m.shape[0]
        if m.ndim != 2 or m.shape[0] != m.shape[1] or n % 2 != 0:
            raise ValueError(f"expected square even-dimension matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        d = n // 2
        j = symplectic_form(d)
        res = float(np.linalg.norm(m @ j @ m.T - j))
        scale = max(float(np.linalg.norm(m)) ** 2, 1.0)
        if res > SYMPLECTIC_TOL * scale:
            raise SymplecticityError("matrix is not symplectic", res)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "residual", res)

    @property
    def d(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def s_xx(self) -> np.ndarray:
        return self.matrix[: self.d, : self.d]

    @property
    def s_xp(self) -> np.ndarray:
        return self.matrix[: self.d, self.d:]

    @property
    def s_px(self) -> np.ndarray:
        return self.matrix[self.d:, : self.d]

    @property
    def s_pp(self) -> np.ndarray:
        return self.matrix[self.d:, self.d:]

    def inverse(self) -> "SymplecticMatrix":
        """S^{-1} = -J S^t J, computed without a linear solve."""
        j = symplectic_form(self.d)
        return SymplecticMatrix(-j @ self.matrix.T @ j)

    def power(self, n: int) -> np.ndarray:
        base = self.matrix if n >= 0 else self.inverse().matrix
        return np.linalg.matrix_power(base, abs(n))


def make_symplectic(s_xx, s_xp, s_px, s_pp) -> SymplecticMatrix:
    """Assemble and validate a symplectic matrix from its four d x d blocks.

    Raises ``SymplecticityError`` carrying the residual ||S J S^t - J|| when
    the block identities fail beyond the relative tolerance 1e-12 * ||S||^2.
    """
    blocks = [np.atleast_2d(np.asarray(b, float)) for b in (s_xx, s_xp, s_px, s_pp)]
    d = blocks[0].shape[0]
    for b in blocks:
        if b.shape != (d, d):
            raise ValueError(f"all blocks must be {d}x{d}, got {b.shape}")
    m = np.block([[blocks[0], blocks[1]], [blocks[2], blocks[3]]])
    return SymplecticMatrix(m)


def generator_to_group(generator: np.ndarray, tau: float) -> SymplecticMatrix:
    """Exponentiate a Hamiltonian generator: S_tau = exp(tau * L).

    The one-parameter family exp(tau L) is symplectic for all tau exactly when
    L J + J L^t = 0; the generator is rejected otherwise.
    """
    L = np.asarray(generator, float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] % 2 != 0:
        raise ValueError(f"generator must be a square 2d x 2d matrix, got {L.shape}")
    d = L.shape[0] // 2
    j = symplectic_form(d)
    res = float(np.linalg.norm(L @ j + j @ L.T))
    scale = max(float(np.linalg.norm(L)), 1.0)
    if res > 1e-12 * scale:
        raise SymplecticityError("generator violates L J + J L^t = 0", res)
    return SymplecticMatrix(expm(float(tau) * L))


def apply(s: SymplecticMatrix, z: PhaseSpacePoint) -> PhaseSpacePoint:
    """One classical step: (xi, pi) -> S (xi, pi)."""
    if z.d != s.d:
        raise ValueError(f"dimension mismatch: point d={z.d}, matrix d={s.d}")
    return PhaseSpacePoint(s.matrix @ z.vec)


@dataclass(frozen=True)
class ModelSpec:
    """A measurement model: dimension d, one-step map S, measurement covariance Sigma."""

    d: int
    s: SymplecticMatrix
    sigma: np.ndarray

    def __post_init__(self):
        sig = _frozen(np.atleast_2d(self.sigma))
        if self.d < 1:
            raise ValueError("dimension d must be a positive integer")
        if self.s.d != self.d:
            raise ValueError(f"S is for d={self.s.d}, model declares d={self.d}")
        if sig.shape != (self.d, self.d):
            raise ValueError(f"Sigma must be {self.d}x{self.d}, got {sig.shape}")
        if np.linalg.norm(sig - sig.T) > 1e-12 * max(1.0, np.linalg.norm(sig)):
            raise ValueError("Sigma must be symmetric")
        eigvals = np.linalg.eigvalsh(sig)
        if eigvals.min() <= 0:
            raise ValueError(f"Sigma must be positive-definite, min eigenvalue {eigvals.min():.3e}")
        object.__setattr__(self, "sigma", sig)

    @property
    def sigma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.sigma)

    def model_id(self) -> str:
        """Short stable digest of (d, S, Sigma), used to tag measurement records."""
        h = hashlib.sha256()
        h.update(np.int64(self.d).tobytes())
        h.update(np.round(self.s.matrix, 12).tobytes())
        h.update(np.round(self.sigma, 12).tobytes())
        return h.hexdigest()[:12]

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "S": self.s.matrix.tolist(),
                "Sigma": self.sigma.tolist(),
            }
        )

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelSpec":
        d = int(obj["d"])
        s = SymplecticMatrix(np.asarray(obj["S"], float))
        return cls(d=d, s=s, sigma=np.asarray(obj["Sigma"], float))

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))
