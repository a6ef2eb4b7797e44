"""Brute-force d = 1 wavefunction oracle for the measured dynamics.

The particle's wavefunction is sampled on a uniform grid and evolved exactly:

  * measurement collapse is pointwise multiplication by the Gaussian kernel
    V_q(x) = (2 pi sigma^2)^{-1/4} exp(-(x - q)^2 / (4 sigma^2)), with the
    squared norm before renormalization as the outcome density;
  * free flight is a momentum-space phase exp(-i b p^2 / 2) applied with FFTs
    (b the upper-right block of S);
  * a phase-space rotation by omega (harmonic oscillator step) is the exact
    three-shear split  chirp(tan w/2) . momentum-chirp(sin w) . chirp(tan w/2),
    applied in substeps of at most a quarter turn, so there is no time-step
    error for quadratic Hamiltonians;
  * outcomes are drawn as X + Z with X from the |psi|^2 histogram
    (inverse CDF, linear interpolation within cells) and Z ~ N(0, sigma^2).

Everything closed-form elsewhere in the package is validated against this
module.  Periodic wraparound is controlled by choosing boxes that keep the
boundary mass negligible; helpers below size boxes from the expected classical
excursion plus eight standard deviations of all relevant Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .coherent import CoherentState, Superposition, wavefunction
from .phase_space import ModelSpec
from .trajectory import InitialStateSpec, MeasurementRecord, philox_stream

__all__ = [
    "GridState",
    "GridError",
    "BoxError",
    "UnsupportedModelError",
    "init_coherent_grid",
    "init_superposition_grid",
    "apply_V_grid",
    "propagate_grid",
    "sample_outcome_grid",
    "run_oracle_trajectory",
    "oracle_ensemble",
    "grid_fidelity",
    "best_coherent_fidelity",
    "momentum_density",
    "husimi_scan",
    "suggest_box",
]

BOUNDARY_FRACTION = 0.05
BOUNDARY_TOL = 1e-8


class GridError(ValueError):
    pass


class BoxError(GridError):
    """The spatial box is inadequate for the requested state or evolution."""


class UnsupportedModelError(GridError):
    """The one-step map is not generated by a supported Hamiltonian."""


@dataclass(frozen=True)
class GridState:
    """A normalized d = 1 wavefunction on a uniform grid."""

    x_min: float
    x_max: float
    n_points: int
    psi: np.ndarray

    def __post_init__(self):
        if self.n_points < 2 or (self.n_points & (self.n_points - 1)) != 0:
            raise GridError("n_points must be a power of two >= 2")
        psi = np.asarray(self.psi, complex)
        if psi.shape != (self.n_points,):
            raise GridError(f"psi must have shape ({self.n_points},)")
        object.__setattr__(self, "psi", psi)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def p(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def boundary_mass(self) -> float:
        """Probability mass in the outer 5% of the box on either side."""
        k = max(1, int(BOUNDARY_FRACTION * self.n_points))
        prob = np.abs(self.psi) ** 2 * self.dx
        return float(prob[:k].sum() + prob[-k:].sum())

    def normalized(self) -> "GridState":
        return GridState(self.x_min, self.x_max, self.n_points, self.psi / np.sqrt(self.norm_squared()))

    def moments(self) -> tuple[float, float]:
        prob = np.abs(self.psi) ** 2 * self.dx
        mean = float(self.x @ prob)
        var = float(((self.x - mean) ** 2) @ prob)
        return mean, var


def _check_box(x_min: float, x_max: float, psi) -> None:
    comps = [psi] if isinstance(psi, CoherentState) else list(psi.states)
    for comp in comps:
        sx = float(np.sqrt(np.linalg.inv(2.0 * comp.w.im)[0, 0]))
        xi = float(comp.zeta.xi[0])
        if xi - 8.0 * sx < x_min or xi + 8.0 * sx > x_max:
            raise BoxError(
                f"box [{x_min}, {x_max}] does not cover 8 position standard deviations "
                f"around xi={xi} (sigma_x={sx:.3g})"
            )


def init_coherent_grid(x_min: float, x_max: float, n_points: int, state: CoherentState) -> GridState:
    """Sample a coherent state on the grid; the box must cover +-8 sigma."""
    if state.d != 1:
        raise GridError("the grid oracle is one-dimensional")
    _check_box(x_min, x_max, state)
    gs = GridState(x_min, x_max, n_points, np.zeros(n_points, complex))
    psi = wavefunction(state, gs.x)
    return GridState(x_min, x_max, n_points, psi).normalized()


def init_superposition_grid(
    x_min: float, x_max: float, n_points: int, psi: Superposition
) -> GridState:
    """Sample a finite superposition of coherent states and normalize on the grid."""
    if psi.d != 1:
        raise GridError("the grid oracle is one-dimensional")
    _check_box(x_min, x_max, psi)
    gs = GridState(x_min, x_max, n_points, np.zeros(n_points, complex))
    values = sum(
        c * wavefunction(s, gs.x) for c, s in zip(psi.coefficients, psi.states)
    )
    return GridState(x_min, x_max, n_points, values).normalized()


def apply_V_grid(gs: GridState, q: float, sigma2: float) -> tuple[GridState, float]:
    """Collapse by the Gaussian kernel at q; returns (state, outcome density).

    The returned weight is the squared norm before renormalization; as a
    function of q it is the exact outcome density and integrates to one.
    A weight below 1e-300 means the state was annihilated (q far outside the
    support) and is reported as an error rather than renormalized garbage.
    """
    kernel = (2.0 * np.pi * sigma2) ** (-0.25) * np.exp(-((gs.x - q) ** 2) / (4.0 * sigma2))
    psi = gs.psi * kernel
    weight = float(np.sum(np.abs(psi) ** 2) * gs.dx)
    if weight < 1e-300:
        raise GridError(f"measurement at q={q} annihilated the state (weight {weight:.3e})")
    return GridState(gs.x_min, gs.x_max, gs.n_points, psi / np.sqrt(weight)), weight


def _classify_step(model: ModelSpec, inverse: bool) -> tuple[str, float]:
    s = model.s
    if model.d != 1:
        raise UnsupportedModelError("the grid oracle is one-dimensional")
    sxx, sxp = float(s.s_xx[0, 0]), float(s.s_xp[0, 0])
    spx, spp = float(s.s_px[0, 0]), float(s.s_pp[0, 0])
    if abs(spx) < 1e-12 and abs(sxx - 1) < 1e-12 and abs(spp - 1) < 1e-12:
        return "free", (-sxp if inverse else sxp)
    if abs(sxx - spp) < 1e-12 and abs(sxp + spx) < 1e-12 and abs(sxx**2 + sxp**2 - 1) < 1e-10:
        angle = float(np.arctan2(sxp, sxx))
        return "rotation", (-angle if inverse else angle)
    raise UnsupportedModelError(
        "one-step map is neither a free flight nor a phase-space rotation"
    )


def _propagate_batch(psi: np.ndarray, x: np.ndarray, p: np.ndarray, kind: str, par: float) -> np.ndarray:
    """Apply the one-step propagator to rows of psi (batched FFTs)."""
    if kind == "free":
        return np.fft.ifft(np.fft.fft(psi, axis=-1) * np.exp(-0.5j * par * p**2), axis=-1)
    # rotation by `par`: quarter-turn substeps of the exact shear split
    theta = par
    n_sub = max(1, int(np.ceil(abs(theta) / (0.5 * np.pi))))
    theta_s = theta / n_sub
    chirp = np.exp(-0.5j * np.tan(0.5 * theta_s) * x**2)
    pkick = np.exp(-0.5j * np.sin(theta_s) * p**2)
    for _ in range(n_sub):
        psi = psi * chirp
        psi = np.fft.ifft(np.fft.fft(psi, axis=-1) * pkick, axis=-1)
        psi = psi * chirp
    return psi


def propagate_grid(gs: GridState, model: ModelSpec, inverse: bool = False) -> GridState:
    """One unitary step of the model's propagator (or its inverse).

    Exact (no splitting error) for free flight and phase-space rotations; any
    other one-step map raises ``UnsupportedModelError``.
    """
    kind, par = _classify_step(model, inverse)
    psi = _propagate_batch(gs.psi[np.newaxis, :], gs.x, gs.p, kind, par)[0]
    return GridState(gs.x_min, gs.x_max, gs.n_points, psi)


def _inverse_cdf_positions(prob: np.ndarray, x_min: float, dx: float, u: np.ndarray) -> np.ndarray:
    """Draw from the cell histogram `prob` (rows sum to 1) by inverse CDF.

    Within a cell the mass is treated as uniform, i.e. the CDF is interpolated
    linearly; cells are centered on the grid points.
    """
    cdf = np.cumsum(prob, axis=-1)
    cdf /= cdf[..., -1:]
    idx = np.sum(cdf < u[..., np.newaxis], axis=-1)
    idx = np.minimum(idx, prob.shape[-1] - 1)
    below = np.where(idx > 0, np.take_along_axis(cdf, np.maximum(idx - 1, 0)[..., None], -1)[..., 0], 0.0)
    mass = np.take_along_axis(prob, idx[..., None], -1)[..., 0]
    frac = np.where(mass > 0, (u - below) / np.maximum(mass, 1e-300), 0.5)
    return x_min + dx * (idx - 0.5 + frac)


def sample_outcome_grid(gs: GridState, sigma2: float, rng: np.random.Generator) -> float:
    """Draw one outcome Q = X + Z, X from |psi|^2 and Z ~ N(0, sigma^2)."""
    prob = np.abs(gs.psi) ** 2 * gs.dx
    x = _inverse_cdf_positions(prob[np.newaxis, :], gs.x_min, gs.dx, np.array([rng.random()]))[0]
    return float(x + np.sqrt(sigma2) * rng.standard_normal())


def grid_fidelity(gs: GridState, state: CoherentState) -> float:
    """|<state | psi_grid>| via grid quadrature."""
    phi = wavefunction(state, gs.x)
    return float(abs(np.sum(np.conj(phi) * gs.psi) * gs.dx))


def best_coherent_fidelity(gs: GridState, w, zeta_guess: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximize |<W, zeta | psi_grid>| over the center zeta (d = 1).

    Returns (fidelity, argmax zeta).  A Nelder-Mead polish from ``zeta_guess``
    is enough because the objective is a smooth Gaussian in zeta.
    """
    from .phase_space import PhaseSpacePoint

    def neg(z):
        return -grid_fidelity(gs, CoherentState(w, PhaseSpacePoint(np.asarray(z, float))))

    res = minimize(neg, np.asarray(zeta_guess, float), method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-12})
    return -float(res.fun), res.x


def momentum_density(gs: GridState) -> tuple[np.ndarray, np.ndarray]:
    """Momentum grid and normalized |psi_hat(p)|^2 density, sorted by p."""
    psi_hat = np.fft.fft(gs.psi) * gs.dx / np.sqrt(2.0 * np.pi)
    p = gs.p
    order = np.argsort(p)
    dens = np.abs(psi_hat[order]) ** 2
    dp = p[order][1] - p[order][0]
    dens /= dens.sum() * dp
    return p[order], dens


def husimi_scan(gs: GridState, w, xis: np.ndarray, pis: np.ndarray) -> np.ndarray:
    """Table |<W, (xi, pi) | psi>|^2 over a label grid, shape (len(xis), len(pis)).

    The pi dependence is a Fourier kernel, so one matrix product against
    exp(-i x pi) evaluates the whole scan.
    """
    x = gs.x
    amp = (2.0 * np.pi) ** (-0.25) * np.linalg.det(2.0 * w.im) ** 0.25
    dxs = x[np.newaxis, :] - np.asarray(xis, float)[:, np.newaxis]
    gauss = np.conj(amp * np.exp(0.5j * w.w[0, 0] * dxs**2))  # (n_xi, n_x)
    kernel = np.exp(-1j * np.outer(x, np.asarray(pis, float)))  # (n_x, n_pi)
    table = (gauss * gs.psi[np.newaxis, :]) @ kernel * gs.dx
    return np.abs(table) ** 2


def suggest_box(
    model: ModelSpec,
    init: InitialStateSpec,
    n_steps: int,
    noise_cov: np.ndarray,
    k_gain: np.ndarray,
    pad_sigmas: float = 8.0,
) -> tuple[float, float]:
    """Box sized from the classical excursion of S^n zeta_0 plus noise spread.

    Accumulates the position variance of the driven process
    zeta_{n+1} = S (zeta_n - K eta_n) and pads by ``pad_sigmas`` standard
    deviations plus the widest packet scale.
    """
    s = model.s.matrix
    centers = [comp.zeta.vec for comp in init.states]
    widths = [float(np.sqrt(np.linalg.inv(2.0 * comp.w.im)[0, 0])) for comp in init.states]
    lo, hi = np.inf, -np.inf
    cov = np.zeros((2 * model.d, 2 * model.d))
    kick = k_gain @ np.atleast_2d(noise_cov) @ k_gain.T
    for n in range(n_steps + 1):
        for c in centers:
            zc = np.linalg.matrix_power(s, n) @ c
            spread = pad_sigmas * (np.sqrt(max(cov[0, 0], 0.0)) + max(widths)) + pad_sigmas * np.sqrt(
                float(np.atleast_2d(noise_cov)[0, 0])
            )
            lo = min(lo, zc[0] - spread)
            hi = max(hi, zc[0] + spread)
        cov = s @ (cov + kick) @ s.T
    return float(lo), float(hi)


def run_oracle_trajectory(
    gs: GridState,
    model: ModelSpec,
    n_steps: int,
    rng: np.random.Generator,
    seed: int = -1,
    track: CoherentState | None = None,
) -> dict:
    """Alternate outcome sampling, collapse, and propagation for ``n_steps``.

    When ``track`` is a coherent state equal to the initial wavefunction, its
    closed-form image under the same outcomes is followed alongside and the
    per-step fidelity |<closed form | grid>| (after propagation) is recorded.
    Aborts with ``BoxError`` if probability mass reaches the box boundary.

    Returns {"record", "fidelities", "state"}.
    """
    from .coherent import apply_measurement, evolve_forward

    sigma2 = float(model.sigma[0, 0])
    outcomes = np.empty((n_steps, 1))
    fidelities = np.full(n_steps, np.nan)
    for k in range(n_steps):
        if gs.boundary_mass() > BOUNDARY_TOL:
            raise BoxError(
                f"boundary mass {gs.boundary_mass():.3e} at step {k}; enlarge the box"
            )
        q = sample_outcome_grid(gs, sigma2, rng)
        outcomes[k, 0] = q
        gs, _ = apply_V_grid(gs, q, sigma2)
        gs = propagate_grid(gs, model)
        if track is not None:
            track, _ = apply_measurement(np.array([q]), model, track)
            track = evolve_forward(model, track)
            fidelities[k] = grid_fidelity(gs, track)
    record = MeasurementRecord(outcomes, seed=seed, model_id=model.model_id())
    return {"record": record, "fidelities": fidelities, "state": gs}


def oracle_ensemble(
    model: ModelSpec,
    init: InitialStateSpec,
    n_steps: int,
    n_traj: int,
    seed: int,
    x_min: float,
    x_max: float,
    n_points: int,
    chunk: int = 2000,
) -> np.ndarray:
    """Vectorized ensemble of oracle trajectories; returns outcomes (n_traj, n_steps).

    Trajectory i draws from the Philox stream (seed, i): one uniform for the
    mixture component, then per step one uniform (position draw) and one
    standard normal (measurement noise).  States are evolved in batches of
    ``chunk`` rows with batched FFTs.
    """
    sigma2 = float(model.sigma[0, 0])
    kind, par = _classify_step(model, inverse=False)
    proto = GridState(x_min, x_max, n_points, np.zeros(n_points, complex))
    x, p, dx = proto.x, proto.p, proto.dx

    comp_states = []
    for comp in init.states:
        _check_box(x_min, x_max, comp)
        phi = wavefunction(comp, x)
        phi /= np.sqrt(np.sum(np.abs(phi) ** 2) * dx)
        comp_states.append(phi)
    weights = np.cumsum(np.asarray(init.weights))

    out = np.empty((n_traj, n_steps))
    for start in range(0, n_traj, chunk):
        stop = min(start + chunk, n_traj)
        m = stop - start
        u_comp = np.empty(m)
        u_pos = np.empty((m, n_steps))
        z_noise = np.empty((m, n_steps))
        for i in range(m):
            rng = philox_stream(seed, start + i)
            u_comp[i] = rng.random()
            u_pos[i] = rng.random(n_steps)
            z_noise[i] = rng.standard_normal(n_steps)
        idx = np.minimum(np.searchsorted(weights, u_comp, side="right"), len(comp_states) - 1)
        psi = np.stack([comp_states[j] for j in idx], axis=0)
        for k in range(n_steps):
            prob = np.abs(psi) ** 2 * dx
            xs = _inverse_cdf_positions(prob, x_min, dx, u_pos[:, k])
            qs = xs + np.sqrt(sigma2) * z_noise[:, k]
            out[start:stop, k] = qs
            kernel = np.exp(-((x[np.newaxis, :] - qs[:, np.newaxis]) ** 2) / (4.0 * sigma2))
            psi = psi * kernel
            norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=1) * dx)
            psi /= norms[:, np.newaxis]
            psi = _propagate_batch(psi, x, p, kind, par)
        edge = np.abs(psi[:, : max(1, int(BOUNDARY_FRACTION * n_points))]) ** 2
        edge2 = np.abs(psi[:, -max(1, int(BOUNDARY_FRACTION * n_points)):]) ** 2
        if (edge.sum(axis=1) + edge2.sum(axis=1)).max() * dx > BOUNDARY_TOL:
            raise BoxError("ensemble state reached the box boundary; enlarge the box")
    return out
