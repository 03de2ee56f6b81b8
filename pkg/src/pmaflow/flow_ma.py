"""Implicit solver for the parabolic complex Monge-Ampere flow.

The flow is (-d_t phi) det(I + H[phi]) = e^F with phi(0) = phi_0, solved in
the admissible class d_t phi <= 0, I + H[phi] >= 0 by backward Euler with a
full Newton solve per step.  The module also carries the right-hand-side
generators, the volume normalization h(t), and the auxiliary normalized
right-hand sides eta_j(-phi - s) e^F / A_{j,s} used by the estimate layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    ScalarField,
    TorusGrid,
    Trajectory,
    complex_hessian_matrices,
    integrate,
    spacetime_integral,
    _eigvalsh_identity_plus,
)
from .stepping import (
    AdmissibilityLost,
    FlowParams,
    NewtonDiverged,
    newton_step,
    step_times,
)

__all__ = [
    "FlowParams",
    "NewtonDiverged",
    "AdmissibilityLost",
    "RhsSpec",
    "TabulatedRhs",
    "NormalizationProfile",
    "SLevelTooSmall",
    "ma_residual",
    "implicit_step",
    "solve_flow",
    "comparison_check",
    "normalize",
    "build_auxiliary_rhs",
    "eta_smooth_plus",
]


class SLevelTooSmall(ValueError):
    """Level threshold below sup|phi_0|; the maximum-principle range is violated."""


# ---------------------------------------------------------------------------
# right-hand sides


class RhsSpec:
    """Generator for the data F(t, x) with e^F > 0 everywhere.

    kinds: "zero", "time_only" (F = g(t)), "smooth_product"
    (F = spatial(x) * profile(t)), "mollified_log_singularity"
    (e^F = (r_moll^2 + dist^2(x, center))^-q, constant in t).

    `scale` multiplies F; `p0` is the claimed integrability exponent of e^F
    (the conjugate q0 = p0/(p0-1) drives the Holder exponents downstream).
    """

    def __init__(self, kind="zero", g=None, spatial=None, profile=None,
                 center=None, strength=1.0, moll_radius=0.1, p0=2.0, scale=1.0):
        self.kind = kind
        self.g = g
        self.spatial = spatial
        self.profile = profile
        self.center = center
        self.strength = float(strength)
        self.moll_radius = float(moll_radius)
        self.p0 = float(p0)
        self.scale = float(scale)
        if kind not in ("zero", "time_only", "smooth_product",
                        "mollified_log_singularity"):
            raise ValueError(f"unknown rhs kind {kind!r}")
        if kind == "mollified_log_singularity" and moll_radius <= 0:
            raise ValueError("mollification radius must be positive")
        if p0 <= 1.0:
            raise ValueError("p0 must exceed 1")

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls) -> "RhsSpec":
        return cls("zero")

    @classmethod
    def time_only(cls, g, p0: float = 2.0, scale: float = 1.0) -> "RhsSpec":
        return cls("time_only", g=g, p0=p0, scale=scale)

    @classmethod
    def smooth_product(cls, spatial, profile, p0: float = 2.0,
                       scale: float = 1.0) -> "RhsSpec":
        return cls("smooth_product", spatial=spatial, profile=profile,
                   p0=p0, scale=scale)

    @classmethod
    def mollified_log_singularity(cls, center, strength: float,
                                  moll_radius: float, p0: float = 2.0,
                                  scale: float = 1.0) -> "RhsSpec":
        return cls("mollified_log_singularity", center=center,
                   strength=strength, moll_radius=moll_radius, p0=p0,
                   scale=scale)

    def scaled(self, factor: float) -> "RhsSpec":
        out = RhsSpec(self.kind, g=self.g, spatial=self.spatial,
                      profile=self.profile, center=self.center,
                      strength=self.strength, moll_radius=self.moll_radius,
                      p0=self.p0, scale=self.scale * factor)
        return out

    # -- evaluation --------------------------------------------------------
    def _raw_F(self, grid: TorusGrid, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.shape)
        if self.kind == "time_only":
            return np.full(grid.shape, float(self.g(t)))
        if self.kind == "smooth_product":
            spatial = self.spatial
            if callable(spatial):
                spatial = spatial(*grid.meshgrid())
            spatial = np.broadcast_to(np.asarray(spatial, dtype=float), grid.shape)
            return spatial * float(self.profile(t))
        center = self.center if self.center is not None else (0.0,) * grid.real_dim
        d2 = grid.periodic_distance_sq(center)
        return -self.strength * np.log(self.moll_radius**2 + d2)

    def F_field(self, grid: TorusGrid, t: float) -> ScalarField:
        return ScalarField(grid, self.scale * self._raw_F(grid, t))

    def eF_field(self, grid: TorusGrid, t: float) -> ScalarField:
        return ScalarField(grid, np.exp(self.scale * self._raw_F(grid, t)))

    def sample(self, grid: TorusGrid, times) -> tuple[Trajectory, Trajectory]:
        """Trajectories of e^F and F at the given times."""
        times = np.asarray(times, dtype=float)
        F = np.stack([self.F_field(grid, t).values for t in times])
        return (Trajectory(grid, times, np.exp(F)), Trajectory(grid, times, F))

    def lp0_norm(self, grid: TorusGrid, times) -> float:
        """Space-time L^{p0} norm of e^F, recorded for the generator."""
        eF, _ = self.sample(grid, times)
        val = spacetime_integral(eF.map_values(lambda v: np.abs(v) ** self.p0))
        return float(val ** (1.0 / self.p0))


class TabulatedRhs:
    """Right-hand side interpolated linearly in time from a sampled trajectory.

    Wraps auxiliary data (eta_j-weighted densities) so the flow solver can
    consume them like any other RhsSpec.  Stores e^F values directly.
    """

    kind = "tabulated"

    def __init__(self, eF_traj: Trajectory, p0: float = 2.0):
        self.traj = eF_traj
        self.p0 = float(p0)

    def _interp(self, t: float) -> np.ndarray:
        times = self.traj.times
        t = float(np.clip(t, times[0], times[-1]))
        k = int(np.searchsorted(times, t, side="right") - 1)
        k = min(max(k, 0), len(times) - 2) if len(times) > 1 else 0
        if len(times) == 1:
            return self.traj.values[0]
        t0, t1 = times[k], times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1.0 - w) * self.traj.values[k] + w * self.traj.values[k + 1]

    def eF_field(self, grid: TorusGrid, t: float) -> ScalarField:
        return ScalarField(grid, self._interp(t))

    def F_field(self, grid: TorusGrid, t: float) -> ScalarField:
        return ScalarField(grid, np.log(self._interp(t)))

    def sample(self, grid: TorusGrid, times) -> tuple[Trajectory, Trajectory]:
        times = np.asarray(times, dtype=float)
        eF = np.stack([self._interp(t) for t in times])
        return (Trajectory(grid, times, eF),
                Trajectory(grid, times, np.log(eF)))


@dataclass
class NormalizationProfile:
    """Samples of the volume-compatibility normalization h(t).

    h'(t) vol(M) = int_M e^{F(t)} at every sample and h(0) = 0.
    """

    times: np.ndarray
    h_values: np.ndarray
    h_prime: np.ndarray


# ---------------------------------------------------------------------------
# residual / step / solve


def _det_identity_plus(hmat: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return 1.0 + hmat[..., 0, 0].real
    a = 1.0 + hmat[..., 0, 0].real
    b = 1.0 + hmat[..., 1, 1].real
    return a * b - np.abs(hmat[..., 0, 1]) ** 2


def _inverse_identity_plus(hmat: np.ndarray, n: int, det: np.ndarray) -> np.ndarray:
    """(I + H)^{-1} for Hermitian H, n <= 2, via the adjugate."""
    out = np.empty_like(hmat)
    if n == 1:
        out[..., 0, 0] = 1.0 / (1.0 + hmat[..., 0, 0].real)
        return out
    a = 1.0 + hmat[..., 0, 0].real
    b = 1.0 + hmat[..., 1, 1].real
    out[..., 0, 0] = b / det
    out[..., 1, 1] = a / det
    out[..., 0, 1] = -hmat[..., 0, 1] / det
    out[..., 1, 0] = -hmat[..., 1, 0] / det
    return out


def ma_residual(phi_prev: ScalarField, phi_next: ScalarField, dt: float,
                f_next: ScalarField) -> ScalarField:
    """Backward-Euler residual ((phi_prev - phi_next)/dt) det(I+H) - e^F."""
    grid = phi_prev.grid
    lam0 = (phi_prev.values - phi_next.values) / dt
    hmat = complex_hessian_matrices(phi_next.values, grid)
    det = _det_identity_plus(hmat, grid.n_complex)
    return ScalarField(grid, lam0 * det - np.exp(f_next.values))


def _ma_callbacks(grid: TorusGrid, phi_prev_vals: np.ndarray, dt: float,
                  ef_next: np.ndarray, floor: float):
    n = grid.n_complex

    def residual(vals: np.ndarray) -> np.ndarray:
        lam0 = (phi_prev_vals - vals) / dt
        hmat = complex_hessian_matrices(vals, grid)
        det = _det_identity_plus(hmat, n)
        return lam0 * det - ef_next

    def linearization(vals: np.ndarray):
        lam0 = (phi_prev_vals - vals) / dt
        hmat = complex_hessian_matrices(vals, grid)
        det = _det_identity_plus(hmat, n)
        inv = _inverse_identity_plus(hmat, n, det)
        zeroth = det / dt
        b_field = (lam0 * det)[..., None, None] * inv
        return zeroth, b_field

    def admissible(vals: np.ndarray) -> bool:
        hmat = complex_hessian_matrices(vals, grid)
        eigs = _eigvalsh_identity_plus(hmat, n)
        return bool(eigs.min() >= floor)

    return residual, linearization, admissible


def _initial_guess(grid: TorusGrid, phi_prev_vals: np.ndarray, dt: float,
                   ef_next: np.ndarray, mode: str, floor: float) -> np.ndarray:
    """Explicit predictor, falling back to a constant shift (always admissible)."""
    hmat = complex_hessian_matrices(phi_prev_vals, grid)
    det = _det_identity_plus(hmat, grid.n_complex)
    mean_rate = float((ef_next / det).mean())
    if mode == "predictor":
        guess = phi_prev_vals - dt * ef_next / det
        eigs = _eigvalsh_identity_plus(
            complex_hessian_matrices(guess, grid), grid.n_complex)
        if eigs.min() >= floor:
            return guess
    return phi_prev_vals - dt * mean_rate


def implicit_step(phi_prev: ScalarField, dt: float, f_next: ScalarField,
                  params: FlowParams, _t: float | None = None) -> ScalarField:
    """One backward-Euler step of the Monge-Ampere flow.

    Raises NewtonDiverged if the residual cannot be reduced, and
    AdmissibilityLost if the eigenvalue floor is violated.
    """
    grid = phi_prev.grid
    floor = params.admissibility_floor
    phi_prev.require_finite("phi_prev")
    ef_next = np.exp(f_next.values)
    residual, linearization, admissible = _ma_callbacks(
        grid, phi_prev.values, dt, ef_next, floor)
    if not admissible(phi_prev.values):
        raise AdmissibilityLost("phi_prev violates the eigenvalue floor", _t)
    guess = _initial_guess(grid, phi_prev.values, dt, ef_next,
                           params.initial_guess, floor)
    vals = newton_step(grid, guess, residual, linearization, admissible,
                       params, t=_t)
    overshoot = float((vals - phi_prev.values).max())
    if overshoot > 10.0 * params.newton_tol:
        raise NewtonDiverged(
            f"monotonicity violated by {overshoot:.3e} at a converged step", _t)
    return ScalarField(grid, vals)


def solve_flow(phi0: ScalarField, rhs, params: FlowParams) -> Trajectory:
    """Integrate the flow on [0, T]; the trajectory is monotone and admissible."""
    grid = phi0.grid
    times = step_times(params.T, params.dt)
    values = np.empty((len(times),) + grid.shape)
    values[0] = phi0.values
    current = phi0
    for k in range(1, len(times)):
        dt_k = float(times[k] - times[k - 1])
        f_next = rhs.F_field(grid, float(times[k]))
        current = implicit_step(current, dt_k, f_next, params, _t=float(times[k]))
        values[k] = current.values
    return Trajectory(grid, times, values, dt=params.dt)


def comparison_check(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """Sup of |phi_a - phi_b| over [0, T] x M for two solves of the same data."""
    if traj_a.grid != traj_b.grid:
        raise ValueError("trajectories live on different grids")
    if traj_a.n_times != traj_b.n_times or not np.allclose(traj_a.times, traj_b.times):
        raise ValueError("trajectories sample different times")
    return float(np.abs(traj_a.values - traj_b.values).max())


def normalize(traj: Trajectory, rhs) -> tuple[NormalizationProfile, Trajectory]:
    """Volume-compatibility normalization along the trajectory.

    h is the cumulative antiderivative (trapezoid) of
    h'(t) = int_M e^{F(t)} / vol(M) with h(0) = 0.  The normalized potential
    adds h so the trivial flow maps to the zero potential.
    """
    grid = traj.grid
    h_prime = np.array([
        integrate(rhs.eF_field(grid, float(t))) / grid.volume for t in traj.times
    ])
    h_values = np.zeros_like(h_prime)
    if traj.n_times > 1:
        dt = np.diff(traj.times)
        h_values[1:] = np.cumsum(0.5 * dt * (h_prime[1:] + h_prime[:-1]))
    profile = NormalizationProfile(traj.times.copy(), h_values, h_prime)
    shifted = traj.values + h_values.reshape((-1,) + (1,) * grid.real_dim)
    return profile, Trajectory(grid, traj.times.copy(), shifted, dt=traj.dt)


# ---------------------------------------------------------------------------
# auxiliary right-hand sides


def eta_smooth_plus(x, j: int):
    """Smooth positive approximation of max(x, 0): (x + sqrt(x^2 + 1/j)) / 2."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.sqrt(x * x + 1.0 / j))


def build_auxiliary_rhs(phi: Trajectory, eF: Trajectory, s: float,
                        j: int) -> tuple[Trajectory, float]:
    """Normalized density eta_j(-phi - s) e^F / A_{j,s} and the mass A_{j,s}.

    The returned trajectory integrates to exactly 1 over [0, T] x M under
    the trapezoid space-time quadrature.  Requires s >= sup|phi_0| so the
    auxiliary flow comparison holds from t = 0.
    """
    if phi.grid != eF.grid or phi.n_times != eF.n_times:
        raise ValueError("phi and eF must share grid and times")
    sup_phi0 = float(np.abs(phi.values[0]).max())
    if s < sup_phi0:
        raise SLevelTooSmall(
            f"level s={s:.6g} below sup|phi_0|={sup_phi0:.6g}; "
            "the comparison argument needs s >= sup|phi_0|")
    weighted = eta_smooth_plus(-phi.values - s, j) * eF.values
    traj = Trajectory(phi.grid, phi.times.copy(), weighted, dt=phi.dt)
    a_js = spacetime_integral(traj)
    return traj.map_values(lambda v: v / a_js), float(a_js)
