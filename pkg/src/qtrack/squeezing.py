"""Stable squeezing matrix of the repeated-measurement dynamics.

A squeezing matrix W is complex symmetric with positive-definite imaginary
part; it labels the Gaussian wave packets of :mod:`qtrack.coherent`.  Under one
backward step of the measured dynamics the squeezing transforms through the
Moebius-type map

    g(W) = (S_pp - W S_xp)^{-1} (W S_xx - S_px),

and a measurement adds (i/2) Sigma^{-1}.  The squeezing invariant under the
combined backward step is the fixed point W_hat of

    f(W) = g(W) + (i/2) Sigma^{-1},

equivalently the solution of the quadratic matrix equation

    W S_xx - S_px = (S_pp - W S_xp) (W - (i/2) Sigma^{-1})

with W_hat symmetric, Im(W_hat) > 0 and (2 Im W_hat)^{-1} < Sigma.  Existence
requires S_xp to be invertible; no uniqueness is claimed, and the solver
certifies whichever fixed point it converges to.

The solver is a damped fixed-point iteration W <- (1 - alpha) W + alpha f(W)
started at W0 = i Sigma^{-1}, with alpha halved whenever the equation residual
fails to decrease.  For d = 1 the equation is a scalar quadratic solved in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phase_space import ModelSpec

__all__ = [
    "SqueezingMatrix",
    "StableSqueezing",
    "SqueezingError",
    "riccati_map",
    "backward_squeezing_map",
    "forward_squeezing_map",
    "squeezing_residual",
    "solve_squeezing",
    "solve_squeezing_1d",
]


class SqueezingError(ValueError):
    """Invalid squeezing matrix, assumption failure, or non-convergence."""


def _check_squeezing(w: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    w = np.atleast_2d(np.asarray(w, complex))
    if w.shape[0] != w.shape[1]:
        raise SqueezingError(f"squeezing matrix must be square, got {w.shape}")
    scale = max(1.0, float(np.linalg.norm(w)))
    if np.linalg.norm(w - w.T) > tol * scale:
        raise SqueezingError("squeezing matrix must be symmetric (W^t = W)")
    im_eigs = np.linalg.eigvalsh(w.imag)
    if im_eigs.min() <= 0:
        raise SqueezingError(
            f"Im W must be positive-definite, min eigenvalue {im_eigs.min():.3e}"
        )
    return w


@dataclass(frozen=True)
class SqueezingMatrix:
    """Complex symmetric d x d matrix with positive-definite imaginary part."""

    w: np.ndarray

    def __post_init__(self):
        w = _check_squeezing(self.w)
        w = 0.5 * (w + w.T)  # remove round-off asymmetry
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def re(self) -> np.ndarray:
        return self.w.real

    @property
    def im(self) -> np.ndarray:
        return self.w.imag

    def position_cov(self) -> np.ndarray:
        """Position covariance (2 Im W)^{-1} of the wave packet labelled by W."""
        return np.linalg.inv(2.0 * self.im)


@dataclass(frozen=True)
class StableSqueezing:
    """Certified fixed point W_hat together with its diagnostics.

    kappa = 1 - (2 Im W_hat)^{-1} Sigma^{-1} is the contraction factor that
    drives the track estimator; noise_cov = Sigma - (2 Im W_hat)^{-1} is the
    covariance of the innovation noise in the phase-space process.
    """

    w_hat: SqueezingMatrix
    residual: float
    kappa: np.ndarray
    noise_cov: np.ndarray
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        for name in ("kappa", "noise_cov"):
            a = np.atleast_2d(np.asarray(getattr(self, name), float))
            a.flags.writeable = False
            object.__setattr__(self, name, a)


def backward_squeezing_map(w: np.ndarray, model: ModelSpec) -> np.ndarray:
    """g(W) = (S_pp - W S_xp)^{-1} (W S_xx - S_px).

    Well defined whenever Im W > 0; raises on a singular pencil, which signals
    an invalid input W.
    """
    w = np.atleast_2d(np.asarray(w, complex))
    s = model.s
    pencil = s.s_pp - w @ s.s_xp
    try:
        return np.linalg.solve(pencil, w @ s.s_xx - s.s_px)
    except np.linalg.LinAlgError as exc:
        raise SqueezingError("S_pp - W S_xp is singular; W is not a valid squeezing matrix") from exc


def forward_squeezing_map(w: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Inverse of the backward map: squeezing after one forward step of S.

    Obtained from g by replacing S with S^{-1} = -J S^t J, whose blocks are
    (S_pp^t, -S_xp^t, -S_px^t, S_xx^t).
    """
    w = np.atleast_2d(np.asarray(w, complex))
    s = model.s
    pencil = s.s_xx.T + w @ s.s_xp.T
    try:
        return np.linalg.solve(pencil, w @ s.s_pp.T + s.s_px.T)
    except np.linalg.LinAlgError as exc:
        raise SqueezingError("forward squeezing map is singular for this W") from exc


def riccati_map(w: SqueezingMatrix | np.ndarray, model: ModelSpec) -> np.ndarray:
    """One fixed-point iteration step f(W) = g(W) + (i/2) Sigma^{-1}.

    f maps every symmetric W with Im W > 0 into the set Im W >= (1/2) Sigma^{-1},
    so the iteration stays inside the admissible cone.
    """
    w_arr = w.w if isinstance(w, SqueezingMatrix) else np.asarray(w, complex)
    return backward_squeezing_map(w_arr, model) + 0.5j * model.sigma_inv


def squeezing_residual(w: np.ndarray, model: ModelSpec) -> float:
    """Frobenius residual of W S_xx - S_px = (S_pp - W S_xp)(W - (i/2) Sigma^{-1})."""
    w = np.atleast_2d(np.asarray(w, complex))
    s = model.s
    lhs = w @ s.s_xx - s.s_px
    rhs = (s.s_pp - w @ s.s_xp) @ (w - 0.5j * model.sigma_inv)
    return float(np.linalg.norm(lhs - rhs))


def _check_sxp_invertible(model: ModelSpec) -> None:
    smin = np.linalg.svd(model.s.s_xp, compute_uv=False).min()
    if smin <= 1e-10 * max(1.0, np.linalg.norm(model.s.matrix)):
        raise SqueezingError(
            f"S_xp is (numerically) singular, smallest singular value {smin:.3e}; "
            "no stable squeezing matrix exists for this dynamics"
        )


def _certify(w: np.ndarray, model: ModelSpec, residual: float, iterations: int) -> StableSqueezing:
    w_mat = SqueezingMatrix(w)
    inv_2im = np.linalg.inv(2.0 * w_mat.im)
    gap_eigs = np.linalg.eigvalsh(model.sigma - inv_2im)
    if gap_eigs.min() <= 0:
        raise SqueezingError(
            f"(2 Im W_hat)^{{-1}} < Sigma fails, min eigenvalue of the gap {gap_eigs.min():.3e}"
        )
    kappa = np.eye(model.d) - inv_2im @ model.sigma_inv
    noise_cov = model.sigma - inv_2im
    noise_cov = 0.5 * (noise_cov + noise_cov.T)
    return StableSqueezing(
        w_hat=w_mat,
        residual=residual,
        kappa=kappa,
        noise_cov=noise_cov,
        iterations=iterations,
    )


def solve_squeezing(model: ModelSpec, tol: float = 1e-12, max_iter: int = 100000) -> StableSqueezing:
    """Solve the squeezing fixed-point equation and certify the solution.

    Returns a ``StableSqueezing`` whose residual is at most ``tol`` and whose
    matrix satisfies all certified properties (symmetry, Im > 0, gap to Sigma).
    Raises ``SqueezingError`` if S_xp is singular or the iteration does not
    converge within ``max_iter`` steps.
    """
    _check_sxp_invertible(model)
    w = 1.0j * model.sigma_inv.astype(complex)
    res = squeezing_residual(w, model)
    alpha = 1.0
    streak = 0
    for iteration in range(1, max_iter + 1):
        if res <= tol:
            return _certify(w, model, res, iteration - 1)
        proposal = (1.0 - alpha) * w + alpha * riccati_map(w, model)
        proposal = 0.5 * (proposal + proposal.T)
        new_res = squeezing_residual(proposal, model)
        if new_res < res:
            w, res = proposal, new_res
            streak += 1
            if streak >= 5:
                alpha = min(1.0, 2.0 * alpha)
                streak = 0
        else:
            alpha *= 0.5
            streak = 0
            if alpha < 1e-12:
                break
    raise SqueezingError(
        f"fixed-point iteration did not reach tol={tol:.1e} in {max_iter} steps; "
        f"last residual {res:.3e}"
    )


def solve_squeezing_1d(s_xx: float, s_xp: float, s_px: float, s_pp: float, sigma: float) -> complex:
    """Closed-form d=1 squeezing: root with Im > 0 of the scalar quadratic.

    Expanding w*s_xx - s_px = (s_pp - w*s_xp)(w - i/(2 sigma)) gives

        s_xp w^2 + (s_xx - s_pp - i c s_xp) w + (i c s_pp - s_px) = 0,

    with c = 1/(2 sigma).  Raises if s_xp = 0 (no solution exists) or if
    neither root has strictly positive imaginary part.
    """
    if s_xp == 0:
        raise SqueezingError("s_xp = 0: the scalar squeezing equation has no admissible root")
    if sigma <= 0:
        raise SqueezingError("sigma must be positive")
    c = 0.5 / sigma
    a = complex(s_xp)
    b = complex(s_xx - s_pp) - 1j * c * s_xp
    c0 = 1j * c * s_pp - s_px
    disc = np.sqrt(b * b - 4.0 * a * c0 + 0j)
    roots = ((-b + disc) / (2 * a), (-b - disc) / (2 * a))
    admissible = [r for r in roots if r.imag > 0]
    if not admissible:
        raise SqueezingError(f"no root with positive imaginary part among {roots}")
    # The imaginary parts of the two roots sum to c, and the certified root
    # has Im > c, so at most one root qualifies; max() is a no-op tie-break.
    return max(admissible, key=lambda r: r.imag)
