"""Filter matrices R, M, K built from the stable squeezing matrix.

With W_hat the stable squeezing matrix of a model (S, Sigma), define

    R = [[1], [Re W_hat]] (2 Im W_hat)^{-1} Sigma^{-1}          (2d x d)
    M = (1_{2d} - [R | 0]) S^{-1}                               (2d x 2d)
    K = S^{-1} M^{-1} R
      = [[1], [Re W_hat]] (2 Im W_hat)^{-1} (Sigma - (2 Im W_hat)^{-1})^{-1}.

K is the gain of the phase-space process zeta_{n+1} = S(zeta_n - K eta_n); M
and R drive the geometric-series track estimator.  Everything here is real;
any imaginary round-off from the complex W_hat is checked and discarded.

Three spectral conditions are certified per model:

    invertibility of S_xp        (a stable squeezing matrix exists),
    |eig(S)| = 1                 (no unstable classical manifold),
    spectral radius of M < 1     (the estimator series converges).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phase_space import ModelSpec
from .squeezing import StableSqueezing, solve_squeezing

__all__ = [
    "FilterMatrices",
    "AssumptionReport",
    "build_filter",
    "check_assumptions",
    "power_norm_profile",
    "certify",
]

#: Threshold on the smallest singular value of S_xp, relative to ||S||.
AW_THRESHOLD = 1e-10
#: Tolerance on | |eig(S)| - 1 |.
AS_TOL = 1e-8
#: Required margin of the spectral radius of M below one.
AM_MARGIN = 1e-8


def _real_part_checked(a: np.ndarray, what: str) -> np.ndarray:
    imag = float(np.abs(a.imag).max()) if np.iscomplexobj(a) else 0.0
    if imag > 1e-10 * max(1.0, float(np.abs(a).max())):
        raise ValueError(f"{what} has unexpectedly large imaginary part {imag:.3e}")
    return np.ascontiguousarray(a.real, dtype=float)


@dataclass(frozen=True)
class FilterMatrices:
    """The real matrices (R, M, K, kappa) of a certified model."""

    r: np.ndarray
    m: np.ndarray
    k: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        for name in ("r", "m", "k", "kappa"):
            a = np.asarray(getattr(self, name), float)
            a = np.array(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def d(self) -> int:
        return self.r.shape[1]

    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.m)).max())


@dataclass(frozen=True)
class AssumptionReport:
    """Spectral certification of a model: which assumptions hold, with data."""

    aw_ok: bool
    aw_smallest_singular_value: float
    as_ok: bool
    as_eigenvalue_moduli: np.ndarray
    am_ok: bool
    am_spectral_radius: float

    @property
    def all_ok(self) -> bool:
        return self.aw_ok and self.as_ok and self.am_ok

    def to_dict(self) -> dict:
        return {
            "aw_ok": bool(self.aw_ok),
            "aw_smallest_singular_value": float(self.aw_smallest_singular_value),
            "as_ok": bool(self.as_ok),
            "as_eigenvalue_moduli": [float(v) for v in self.as_eigenvalue_moduli],
            "am_ok": bool(self.am_ok),
            "am_spectral_radius": float(self.am_spectral_radius),
        }


def build_filter(model: ModelSpec, stable: StableSqueezing) -> FilterMatrices:
    """Construct (R, M, K, kappa) from a certified squeezing matrix.

    The gain K is computed both as S^{-1} M^{-1} R and from its closed form;
    the two must agree to 1e-10, otherwise the inputs are inconsistent.
    Raises on a singular M, which signals a degenerate Sigma - (2 Im W_hat)^{-1}.
    """
    d = model.d
    w = stable.w_hat
    inv_2im = np.linalg.inv(2.0 * w.im)
    stack = np.vstack([np.eye(d), w.re])  # [[1], [Re W_hat]]

    r = stack @ inv_2im @ model.sigma_inv
    r = _real_part_checked(r, "R")

    pad = np.zeros((2 * d, 2 * d))
    pad[:, :d] = r
    s_inv = model.s.inverse().matrix
    m = (np.eye(2 * d) - pad) @ s_inv

    gap = model.sigma - inv_2im
    if np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() <= 0:
        raise ValueError("Sigma - (2 Im W_hat)^{-1} is degenerate; M would be singular")
    k_closed = stack @ inv_2im @ np.linalg.inv(gap)
    k_closed = _real_part_checked(k_closed, "K")
    k_chain = s_inv @ np.linalg.solve(m, r)
    agreement = float(np.linalg.norm(k_closed - k_chain))
    if agreement > 1e-10 * max(1.0, np.linalg.norm(k_closed)):
        raise ValueError(f"K = S^-1 M^-1 R and closed form disagree by {agreement:.3e}")

    kappa = np.eye(d) - inv_2im @ model.sigma_inv
    kappa = _real_part_checked(kappa, "kappa")
    return FilterMatrices(r=r, m=m, k=k_closed, kappa=kappa)


def check_assumptions(model: ModelSpec, fm: FilterMatrices) -> AssumptionReport:
    """Spectral report on the three model assumptions; never raises."""
    s = model.s.matrix
    smin = float(np.linalg.svd(model.s.s_xp, compute_uv=False).min())
    aw_ok = smin > AW_THRESHOLD * max(1.0, float(np.linalg.norm(s)))

    moduli = np.abs(np.linalg.eigvals(s))
    as_ok = bool(np.all(np.abs(moduli - 1.0) <= AS_TOL))

    rho = float(np.abs(np.linalg.eigvals(fm.m)).max())
    am_ok = rho < 1.0 - AM_MARGIN

    return AssumptionReport(
        aw_ok=bool(aw_ok),
        aw_smallest_singular_value=smin,
        as_ok=as_ok,
        as_eigenvalue_moduli=np.sort(moduli),
        am_ok=bool(am_ok),
        am_spectral_radius=rho,
    )


def power_norm_profile(t: np.ndarray, n_max: int) -> tuple[np.ndarray, float]:
    """Spectral norms ||T^n|| for n = 1..n_max and the polynomial-growth constant.

    Returns (norms, c) with c = max_n ||T^n|| / (n^{dim-1} |lambda_max|^n), the
    smallest constant witnessing ||T^n|| <= c n^{dim-1} |lambda_max|^n over the
    computed range.
    """
    t = np.atleast_2d(np.asarray(t, float))
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    dim = t.shape[0]
    lam = float(np.abs(np.linalg.eigvals(t)).max())
    norms = np.empty(n_max)
    power = np.eye(dim)
    for n in range(1, n_max + 1):
        power = power @ t
        norms[n - 1] = np.linalg.norm(power, 2)
    n_arr = np.arange(1, n_max + 1, dtype=float)
    envelope = n_arr ** (dim - 1) * lam**n_arr
    c = float(np.max(norms / envelope))
    return norms, c


def certify(model: ModelSpec, tol: float = 1e-12):
    """Solve, build, and check a model in one call.

    Returns (StableSqueezing, FilterMatrices, AssumptionReport).
    """
    stable = solve_squeezing(model, tol=tol)
    fm = build_filter(model, stable)
    report = check_assumptions(model, fm)
    return stable, fm, report
