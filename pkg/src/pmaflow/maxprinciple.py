"""Parabolic Alexandrov machinery on real space-time boxes and balls.

This module is deliberately independent of the torus: it validates the
real-variable maximum principle the flow estimates import.  A space-time
field u on [0, T] x Omega is scanned for its contact set

    E = {(t, x) : d_t u >= 0 and D^2_x u <= 0},

and the principle's two sides are evaluated:

    sup u  vs  sup_{parabolic boundary} u
           + C (diam Omega)^{m/(m+1)} (int_E d_t u det(-D^2 u))^{1/(m+1)}.

The divergence-form variant (Lieberman) replaces the integrand by
(f^-)^{m+1} / det(a^{ij}) for fields satisfying -d_t u + a^{ij} d_ij u >= f.
C is never asserted in absolute form; families of test functions report the
implied constant and its spread.  The curvature test D^2 u <= 0 uses a
tolerance of `eig_tol` (default 10 h, the discrete curvature noise floor);
marginally positive determinant fuzz admitted by the tolerance is clamped
to keep the integrand nonnegative on the mask by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpaceTimeGridReal",
    "ContactSetReport",
    "LiebermanReport",
    "HypothesisViolated",
    "sample_space_time",
    "contact_set",
    "lieberman_form_check",
    "mask_to_csv",
]


class HypothesisViolated(ValueError):
    """The differential inequality fails on too many points."""


@dataclass
class SpaceTimeGridReal:
    """Uniform grid on [0, T] x Omega, Omega = [0, 1]^m or a masked ball."""

    m: int
    n_points: int          # nodes per spatial axis (N + 1 including both ends)
    T: float
    n_steps: int
    domain: str = "box"    # "box" or "ball"
    ball_center: tuple | None = None
    ball_radius: float = 0.5

    def __post_init__(self):
        if self.m not in (1, 2, 3):
            raise ValueError("spatial dimension m must be 1, 2, or 3")
        if self.n_points < 5 or self.n_steps < 2:
            raise ValueError("grid too small")
        if self.domain not in ("box", "ball"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.ball_center is None:
            self.ball_center = (0.5,) * self.m

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points - 1)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def axis(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points)

    def meshgrid(self) -> tuple:
        return np.meshgrid(*([self.axis()] * self.m), indexing="ij")

    @property
    def diameter(self) -> float:
        if self.domain == "ball":
            return 2.0 * self.ball_radius
        return float(np.sqrt(self.m))

    def domain_mask(self) -> np.ndarray:
        """Nodes belonging to the closed domain."""
        if self.domain == "box":
            return np.ones((self.n_points,) * self.m, dtype=bool)
        coords = self.meshgrid()
        d2 = sum((c - c0) ** 2 for c, c0 in zip(coords, self.ball_center))
        return d2 <= self.ball_radius**2 + 1e-12

    def interior_mask(self) -> np.ndarray:
        """Domain nodes all of whose axis neighbors are domain nodes."""
        dom = self.domain_mask()
        interior = dom.copy()
        for axis in range(self.m):
            lo = np.ones_like(dom)
            hi = np.ones_like(dom)
            sl_lo = [slice(None)] * self.m
            sl_hi = [slice(None)] * self.m
            sl_lo[axis] = slice(1, None)
            sl_hi[axis] = slice(None, -1)
            lo[tuple(sl_lo)] = dom[tuple(sl_hi)]
            hi[tuple(sl_hi)] = dom[tuple(sl_lo)]
            # nodes at array edges have no neighbor: never interior
            edge_lo = [slice(None)] * self.m
            edge_lo[axis] = 0
            lo[tuple(edge_lo)] = False
            edge_hi = [slice(None)] * self.m
            edge_hi[axis] = -1
            hi[tuple(edge_hi)] = False
            interior &= lo & hi
        return interior

    def domain_volume(self) -> float:
        """Discrete volume consistent with the contact-set quadrature."""
        return float(self.interior_mask().sum() * self.h**self.m)


def sample_space_time(stg: SpaceTimeGridReal, fn) -> np.ndarray:
    """Sample fn(t, *coords) on the space-time grid; shape (K+1, N, ..., N)."""
    coords = stg.meshgrid()
    out = np.empty((stg.n_steps + 1,) + coords[0].shape)
    for k, t in enumerate(stg.times):
        out[k] = fn(t, *coords)
    return out


@dataclass
class ContactSetReport:
    contact_mask: np.ndarray       # (K+1, spatial...) True on E
    integral_value: float          # int_E d_t u det(-D^2 u)
    sup_interior: float
    sup_parabolic_boundary: float
    domain_volume: float
    eig_tol: float
    integrand: np.ndarray = field(repr=False, default=None)


def _time_derivative(u: np.ndarray, dt: float) -> np.ndarray:
    """Centered in the interior, backward at the final time; slot 0 unused."""
    du = np.zeros_like(u)
    if u.shape[0] > 2:
        du[1:-1] = (u[2:] - u[:-2]) / (2.0 * dt)
    du[-1] = (u[-1] - u[-2]) / dt
    return du


def _spatial_hessian(u_slice: np.ndarray, h: float, m: int) -> np.ndarray:
    """Centered second differences; shape (*spatial, m, m); edges garbage."""
    out = np.zeros(u_slice.shape + (m, m))
    for a in range(m):
        out[..., a, a] = (np.roll(u_slice, -1, a) - 2.0 * u_slice
                          + np.roll(u_slice, 1, a)) / h**2
        for b in range(a + 1, m):
            vpp = np.roll(np.roll(u_slice, -1, a), -1, b)
            vpm = np.roll(np.roll(u_slice, -1, a), 1, b)
            vmp = np.roll(np.roll(u_slice, 1, a), -1, b)
            vmm = np.roll(np.roll(u_slice, 1, a), 1, b)
            out[..., a, b] = out[..., b, a] = (vpp - vpm - vmp + vmm) / (4.0 * h**2)
    return out


def _eig_range(hess: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) eigenvalue fields of the symmetric Hessian stack."""
    if m == 1:
        e = hess[..., 0, 0]
        return e, e
    if m == 2:
        a = hess[..., 0, 0]
        b = hess[..., 1, 1]
        c = hess[..., 0, 1]
        mean = 0.5 * (a + b)
        rad = np.sqrt(0.25 * (a - b) ** 2 + c * c)
        return mean - rad, mean + rad
    eigs = np.linalg.eigvalsh(hess)
    return eigs[..., 0], eigs[..., -1]


def _det_neg_hessian(hess: np.ndarray, m: int) -> np.ndarray:
    if m == 1:
        return -hess[..., 0, 0]
    if m == 2:
        return (hess[..., 0, 0] * hess[..., 1, 1]
                - hess[..., 0, 1] ** 2)  # det(-A) = det(A) for m = 2
    return np.linalg.det(-hess)


def contact_set(stg: SpaceTimeGridReal, u: np.ndarray,
                eig_tol: float | None = None) -> ContactSetReport:
    """Contact set, its integral, and the two sups of the maximum principle.

    The mask lives on interior nodes at times t_1..t_K; the parabolic
    boundary sup combines the t = 0 slice with the spatial boundary at all
    times.  Quadrature is point-mass h^m dt on masked nodes.
    """
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite values")
    if u.shape != (stg.n_steps + 1,) + (stg.n_points,) * stg.m:
        raise ValueError("field shape does not match the space-time grid")
    h, dt, m = stg.h, stg.dt, stg.m
    tol = 10.0 * h if eig_tol is None else eig_tol

    interior = stg.interior_mask()
    dom = stg.domain_mask()
    boundary = dom & ~interior

    du = _time_derivative(u, dt)
    mask = np.zeros(u.shape, dtype=bool)
    integrand = np.zeros(u.shape)
    for k in range(1, stg.n_steps + 1):
        hess = _spatial_hessian(u[k], h, m)
        eig_max = _eig_range(hess, m)[1]
        on_e = interior & (du[k] >= 0.0) & (eig_max <= tol)
        mask[k] = on_e
        det_neg = np.maximum(_det_neg_hessian(hess, m), 0.0)
        integrand[k] = np.where(on_e, du[k] * det_neg, 0.0)
    integral = float(integrand.sum() * h**m * dt)

    sup_interior = float(u[:, dom].max()) if dom.any() else -np.inf
    sup_pb = max(float(u[0][dom].max()),
                 float(u[:, boundary].max()) if boundary.any() else -np.inf)
    return ContactSetReport(mask, integral, sup_interior, sup_pb,
                            stg.domain_volume(), tol, integrand)


def mask_to_csv(report: ContactSetReport, path) -> None:
    """Contact-set point list: one row (k, i, j, ...) per masked node."""
    pts = np.argwhere(report.contact_mask)
    m = report.contact_mask.ndim - 1
    header = ",".join(["k"] + [f"i{a}" for a in range(m)])
    np.savetxt(path, pts, fmt="%d", delimiter=",", header=header, comments="")


@dataclass
class LiebermanReport:
    hypothesis_violations: int
    hypothesis_points: int
    integral_value: float
    sup_interior: float
    sup_parabolic_boundary: float
    implied_constant: float
    exponent: float
    diameter: float


def lieberman_form_check(stg: SpaceTimeGridReal, u: np.ndarray,
                         a_field: np.ndarray, f_field: np.ndarray,
                         exponent: float | None = None,
                         eig_tol: float | None = None,
                         hypothesis_slack: float = 1e-9) -> LiebermanReport:
    """Divergence-form maximum-principle check with a free constant.

    Verifies -d_t u + a^{ij} d_ij u >= f pointwise on interior nodes first
    (HypothesisViolated beyond 0.1% of points), then evaluates

        implied C = (sup u - sup_{par.bdry} u)
                    / (diam^{m/(m+1)} (int_E (f^-)^q / det a)^{1/q})

    with q = exponent (default m + 1; the theory's applications also use
    2n + 1, so the exponent is exposed).  a_field has shape
    (K+1, *spatial, m, m), f_field (K+1, *spatial).
    """
    m = stg.m
    q = float(m + 1 if exponent is None else exponent)
    h, dt = stg.h, stg.dt
    tol = 10.0 * h if eig_tol is None else eig_tol
    interior = stg.interior_mask()
    dom = stg.domain_mask()
    boundary = dom & ~interior

    du = _time_derivative(u, dt)
    bad = 0
    total = 0
    mask_integral = 0.0
    for k in range(1, stg.n_steps + 1):
        hess = _spatial_hessian(u[k], h, m)
        lhs = -du[k] + np.einsum("...ij,...ij->...", a_field[k], hess)
        scale = 1.0 + np.abs(f_field[k])
        viol = interior & (lhs < f_field[k] - hypothesis_slack * scale)
        bad += int(viol.sum())
        total += int(interior.sum())
        eig_max = _eig_range(hess, m)[1]
        on_e = interior & (du[k] >= 0.0) & (eig_max <= tol)
        f_minus = np.maximum(-f_field[k], 0.0)
        det_a = np.linalg.det(a_field[k]) if m > 1 else a_field[k][..., 0, 0]
        contrib = np.where(on_e, f_minus**q / np.maximum(det_a, 1e-300), 0.0)
        mask_integral += float(contrib.sum() * h**m * dt)

    if bad > 0.001 * total:
        raise HypothesisViolated(
            f"differential inequality fails on {bad}/{total} interior points")

    sup_interior = float(u[:, dom].max())
    sup_pb = max(float(u[0][dom].max()),
                 float(u[:, boundary].max()) if boundary.any() else -np.inf)
    numer = sup_interior - sup_pb
    denom = stg.diameter ** (m / (m + 1.0)) * mask_integral ** (1.0 / q)
    implied = 0.0
    if numer > 0.0:
        implied = numer / denom if denom > 0.0 else float("inf")
    return LiebermanReport(bad, total, mask_integral, sup_interior, sup_pb,
                           implied, q, stg.diameter)
