"""Density transport along characteristics of a prescribed velocity field.

Points are arrays whose last axis has length ``dim``; one-dimensional
helpers also accept plain scalars or 1-D arrays of positions.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from .errors import (
    CharacteristicExit,
    DomainError,
    MissingBoundaryData,
    TangencyError,
    UnsupportedConfiguration,
)

__all__ = [
    "WholeSpace",
    "Interval",
    "Ball",
    "VelocityFieldSpec",
    "DensityProfile",
    "CharacteristicFlow",
    "flow_forward",
    "flow_backward",
    "density_from_characteristics",
    "continuity_residual",
    "regularity_propagation_check",
    "decay_propagation_check",
    "equilibrium_profile",
    "mass_threshold",
    "mass_criterion",
]

DEFAULT_DT = 1e-3


class WholeSpace:
    def __init__(self, dim=1):
        self.dim = dim

    def level(self, x):
        return np.full(np.shape(x)[:-1], -np.inf)

    def normal(self, x):
        raise DomainError("the whole space has no boundary")

    def boundary_samples(self):
        return []


class Interval:
    """Open interval ``(lo, hi)``; either end may be infinite."""

    dim = 1

    def __init__(self, lo=-np.inf, hi=np.inf):
        if not lo < hi:
            raise DomainError("interval needs lo < hi")
        self.lo, self.hi = float(lo), float(hi)

    def level(self, x):
        x = np.asarray(x)[..., 0]
        return np.maximum(self.lo - x, x - self.hi)

    def normal(self, x):
        x = np.asarray(x)[..., 0]
        n = np.where(np.abs(x - self.lo) <= np.abs(x - self.hi), -1.0, 1.0)
        return n[..., None]

    def boundary_samples(self):
        out = []
        if np.isfinite(self.lo):
            out.append((np.array([self.lo]), np.array([-1.0])))
        if np.isfinite(self.hi):
            out.append((np.array([self.hi]), np.array([1.0])))
        return out


class Ball:
    """Ball of given radius, or its exterior when ``exterior=True``."""

    def __init__(self, center, radius, exterior=False):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = self.center.size
        self.radius = float(radius)
        self.exterior = exterior

    def level(self, x):
        r = np.linalg.norm(np.asarray(x) - self.center, axis=-1)
        return self.radius - r if self.exterior else r - self.radius

    def normal(self, x):
        d = np.asarray(x) - self.center
        n = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return -n if self.exterior else n

    def boundary_samples(self, n=64):
        if self.dim == 1:
            pts = [self.center - self.radius, self.center + self.radius]
        elif self.dim == 2:
            th = np.linspace(0, 2 * np.pi, n, endpoint=False)
            pts = self.center + self.radius * np.stack([np.cos(th), np.sin(th)], -1)
        else:
            return []
        return [(np.asarray(p), self.normal(np.asarray(p))) for p in pts]


@dataclass
class VelocityFieldSpec:
    """Analytic velocity field with its gradient.

    ``value(t, x)`` maps points of shape ``(..., dim)`` to velocities of the
    same shape; ``gradient`` returns ``(..., dim, dim)``.  ``divergence``
    defaults to the trace of the gradient.
    """

    value: Callable
    gradient: Callable
    dim: int = 1
    T: float = np.inf
    domain: object = None
    divergence: Optional[Callable] = None
    support_radius: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if self.domain is None:
            self.domain = WholeSpace(self.dim)
        if self.divergence is None:
            grad = self.gradient
            self.divergence = lambda t, x: np.trace(grad(t, x), axis1=-2, axis2=-1)

    @classmethod
    def from_1d(cls, u, ux, **kwargs):
        """Build a 1-D field from scalar callables ``u(t, x)`` and ``u_x(t, x)``."""
        return cls(
            value=lambda t, x: np.asarray(u(t, x[..., 0]), dtype=float)[..., None]
            + np.zeros_like(x),
            gradient=lambda t, x: np.asarray(ux(t, x[..., 0]), dtype=float)[..., None, None]
            + np.zeros(x.shape + (1,)),
            dim=1,
            **kwargs,
        )

    # scalar 1-D conveniences used by the solver and relative-energy code
    def u1(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.value(t, x[..., None])[..., 0]

    def ux1(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.gradient(t, x[..., None])[..., 0, 0]

    @classmethod
    def zero(cls, **kwargs):
        return cls.from_1d(lambda t, x: 0.0 * x, lambda t, x: 0.0 * x, name="zero", **kwargs)

    @classmethod
    def constant(cls, c, **kwargs):
        return cls.from_1d(lambda t, x: c + 0.0 * x, lambda t, x: 0.0 * x, name="constant", **kwargs)

    @classmethod
    def linear(cls, k=1.0, **kwargs):
        """``u(x) = k x``; characteristics are ``x0 exp(k t)``."""
        return cls.from_1d(lambda t, x: k * x, lambda t, x: k + 0.0 * x, name="linear", **kwargs)

    @classmethod
    def sine(cls, amplitude=0.5, length=1.0, **kwargs):
        """``A sin(pi x / L)`` on ``(0, L)``; vanishes on the boundary (no inflow)."""
        k = np.pi / length
        kwargs.setdefault("domain", Interval(0.0, length))
        return cls.from_1d(
            lambda t, x: amplitude * np.sin(k * x),
            lambda t, x: amplitude * k * np.cos(k * x),
            name="sine",
            **kwargs,
        )

    @classmethod
    def compact_bump(cls, amplitude=0.5, radius=1.0, **kwargs):
        """``A x (1 - (x/R)^2)^2`` for ``|x| < R`` and zero outside (C^1)."""
        R = float(radius)

        def u(t, x):
            s = np.clip(1.0 - (x / R) ** 2, 0.0, None)
            return amplitude * x * s**2

        def ux(t, x):
            s = np.clip(1.0 - (x / R) ** 2, 0.0, None)
            inside = np.abs(x) < R
            return np.where(inside, amplitude * (s**2 - 4.0 * (x / R) ** 2 * s), 0.0)

        return cls.from_1d(u, ux, name="compact-bump", support_radius=R, **kwargs)


@dataclass
class DensityProfile:
    """Nonnegative density ``rho0(x)`` with optional decay/support metadata."""

    evaluate: Callable
    alpha: Optional[float] = None
    support_radius: Optional[float] = None
    name: str = "custom"

    def __call__(self, x):
        return np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float)

    @classmethod
    def gaussian(cls, amplitude=1.0, width=1.0, center=0.0):
        return cls(
            lambda x: amplitude * np.exp(-(((x - center) / width) ** 2)), name="gaussian"
        )

    @classmethod
    def polynomial_decay(cls, alpha, gamma):
        """``rho0**(gamma-1) = (1 + x^2)**(-(alpha-1)/2)``.

        Then ``|d/dx rho0**(gamma-1)| ~ |x|**(-alpha)`` and ``rho0`` itself
        decays like ``|x|**(-(alpha-1)/(gamma-1))``.
        """
        expo = (alpha - 1.0) / (2.0 * (gamma - 1.0))
        return cls(lambda x: (1.0 + x * x) ** (-expo), alpha=alpha, name="polynomial-decay")

    @classmethod
    def compact_power(cls, gamma, radius=1.0, amplitude=1.0):
        """``amplitude * (1 - (x/R)^2)_+ ** (2/(gamma-1))``: ``rho0**(gamma-1)`` is C^1."""
        R = float(radius)
        expo = 2.0 / (gamma - 1.0)
        return cls(
            lambda x: amplitude * np.clip(1.0 - (x / R) ** 2, 0.0, None) ** expo,
            support_radius=R,
            name="compact-power",
        )


def _as_points(x, dim):
    """Return ``(points, squeeze)``; 1-D scalars and vectors become ``(..., 1)``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None], True
    if x.shape[-1] != dim:
        raise DomainError(f"points must have trailing dimension {dim}")
    return x, False


def _unpoint(x, squeeze):
    x = x[..., 0] if squeeze else x
    return float(x) if np.ndim(x) == 0 else x


class CharacteristicFlow:
    """Classical RK4 integration of ``dX/dt = u(t, X)`` with fixed step ``dt``.

    The divergence of the field is integrated along the same trajectories by
    the same stepper, which gives the exponential factor of the transported
    density.
    """

    def __init__(self, spec, dt=DEFAULT_DT, tangency_tol=1e-8):
        if not dt > 0:
            raise DomainError("dt must be positive")
        self.spec = spec
        self.dt = float(dt)
        self.tangency_tol = tangency_tol

    def _rhs(self, s, y):
        x = y[:, :-1]
        return np.concatenate(
            [self.spec.value(s, x), np.asarray(self.spec.divergence(s, x))[:, None]], axis=1
        )

    def _rk4(self, s, y, h):
        h = np.asarray(h, dtype=float)[..., None] if np.ndim(h) else h
        k1 = self._rhs(s, y)
        k2 = self._rhs(s + 0.5 * _flat(h), y + 0.5 * h * k1)
        k3 = self._rhs(s + 0.5 * _flat(h), y + 0.5 * h * k2)
        k4 = self._rhs(s + _flat(h), y + h * k3)
        return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _steps(self, span):
        n = max(1, math.ceil(abs(span) / self.dt - 1e-9))
        return n, span / n

    def _check_time(self, t):
        if t < 0 or t > self.spec.T:
            raise DomainError(f"time {t} outside [0, {self.spec.T}]")

    def forward(self, x0, t, t0=0.0, check_exit=True):
        """Position at time ``t`` of the characteristic through ``x0`` at ``t0``."""
        self._check_time(t)
        pts, squeeze = _as_points(x0, self.spec.dim)
        shape = pts.shape
        y = np.concatenate([pts.reshape(-1, self.spec.dim), np.zeros((pts[..., 0].size, 1))], 1)
        if t == t0:
            return _unpoint(pts, squeeze)
        n, h = self._steps(t - t0)
        dom = self.spec.domain
        for k in range(n):
            y = self._rk4(t0 + k * h, y, h)
            if check_exit:
                lev = dom.level(y[:, :-1])
                if np.any(lev > 0):
                    i = int(np.argmax(lev > 0))
                    raise CharacteristicExit(
                        "characteristic left the domain", time=t0 + (k + 1) * h, point=y[i, :-1]
                    )
        return _unpoint(y[:, :-1].reshape(shape), squeeze)

    def backward(self, x, t):
        """Foot point, entry time and log-compression of backward characteristics.

        Returns ``(x0, tau, log_factor)`` where ``log_factor`` equals
        ``-int_tau^t div u(s, X(s)) ds``.  ``tau == 0`` means the
        characteristic reached time zero inside the domain; otherwise ``x0``
        is the boundary entry point.
        """
        self._check_time(t)
        pts, squeeze = _as_points(x, self.spec.dim)
        shape = pts.shape
        d = self.spec.dim
        y = np.concatenate([pts.reshape(-1, d), np.zeros((pts[..., 0].size, 1))], 1)
        if np.any(self.spec.domain.level(y[:, :-1]) > 0):
            raise DomainError("point lies outside the domain")
        tau = np.zeros(len(y))
        active = np.ones(len(y), dtype=bool)
        if t > 0:
            n, h = self._steps(t)
            h = -h
            for k in range(n):
                if not active.any():
                    break
                s = t + k * h
                idx = np.flatnonzero(active)
                y_new = self._rk4(s, y[idx], h)
                out = self.spec.domain.level(y_new[:, :-1]) > 0
                y[idx[~out]] = y_new[~out]
                for j in idx[out]:
                    y[j], tau[j] = self._locate_entry(s, y[j], h)
                    active[j] = False
        x0 = y[:, :-1].reshape(shape)
        return _unpoint(x0, squeeze), _flat_out(tau.reshape(shape[:-1])), _flat_out(
            y[:, -1].reshape(shape[:-1])
        )

    def _locate_entry(self, s, y, h):
        """Bisect the sub-step at which the backward characteristic exits."""
        dom = self.spec.domain
        y1 = y[None, :]
        lo, hi = 0.0, h
        lev_lo = float(dom.level(y1[:, :-1])[0])
        lev_hi = float(dom.level(self._rk4(s, y1, hi)[:, :-1])[0])
        tol = abs(self.dt) * 1e-3
        while abs(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            lev = float(dom.level(self._rk4(s, y1, mid)[:, :-1])[0])
            if lev > 0:
                hi, lev_hi = mid, lev
            else:
                lo, lev_lo = mid, lev
        # linear interpolation of the level set inside the final bracket
        frac = lev_lo / (lev_lo - lev_hi) if lev_hi != lev_lo else 0.0
        hstar = lo + frac * (hi - lo)
        y_tau = self._rk4(s, y1, hstar)[0]
        tau = s + hstar
        xb = y_tau[None, :-1]
        un = float(np.sum(self.spec.value(tau, xb) * dom.normal(xb)))
        speed = float(np.linalg.norm(self.spec.value(tau, xb)))
        if un > -self.tangency_tol * max(1.0, speed):
            raise TangencyError(
                f"characteristic grazes the boundary at t={tau:.6g} (u.n = {un:.3g})"
            )
        return y_tau, max(tau, 0.0)


def _flat(h):
    return h[..., 0] if np.ndim(h) else h


def _flat_out(a):
    return float(a) if np.ndim(a) == 0 else a


def flow_forward(spec, x0, t, dt=DEFAULT_DT):
    return CharacteristicFlow(spec, dt).forward(x0, t)


def flow_backward(spec, x, t, dt=DEFAULT_DT):
    """Return ``(x0, tau)`` for the backward characteristic from ``(t, x)``."""
    x0, tau, _ = CharacteristicFlow(spec, dt).backward(x, t)
    return x0, tau


def _check_compatibility(rho0, rhoB, spec, tol=1e-8):
    for xb, n in spec.domain.boundary_samples():
        if float(np.sum(spec.value(0.0, xb[None, :])[0] * n)) < 0:
            a = float(np.asarray(rho0(xb if spec.dim > 1 else xb[0])))
            b = float(np.asarray(rhoB(xb if spec.dim > 1 else xb[0])))
            if abs(a - b) > tol * max(1.0, abs(a)):
                raise DomainError(
                    f"initial density {a:g} and boundary density {b:g} disagree on the inflow boundary"
                )


def density_from_characteristics(rho0, rhoB, spec, t, x, dt=DEFAULT_DT, check_compatibility=True):
    """Transported density at ``(t, x)``.

    Points whose backward characteristic stays in the domain take
    ``rho0(x0) * exp(-int_0^t div u)``; points fed through the inflow
    boundary take ``rhoB(x_tau) * exp(-int_tau^t div u)``.
    """
    if rhoB is not None and check_compatibility:
        _check_compatibility(rho0, rhoB, spec)
    x0, tau, logf = CharacteristicFlow(spec, dt).backward(x, t)
    x0 = np.asarray(x0, dtype=float)
    tau = np.asarray(tau)
    feet = x0
    inflow = tau > 0
    src = np.empty(np.shape(tau), dtype=float)
    if np.any(~inflow):
        src[~inflow] = np.asarray(rho0(feet[~inflow] if np.ndim(feet) else feet), dtype=float)
    if np.any(inflow):
        if rhoB is None:
            raise MissingBoundaryData("characteristic enters through the inflow boundary but rho_B is missing")
        src[inflow] = np.asarray(rhoB(feet[inflow] if np.ndim(feet) else feet), dtype=float)
    out = src * np.exp(np.asarray(logf))
    return float(out) if np.ndim(out) == 0 else out


def continuity_residual(rho, spec, x, t, dt):
    """Max of ``|d_t rho + d_x(rho u)|`` over interior nodes by centred differences.

    ``rho(t, x)`` is a callable sampled on the uniform 1-D grid ``x`` at
    ``t - dt``, ``t`` and ``t + dt``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DomainError("continuity residual needs at least 3 grid points")
    if t - dt < 0:
        raise DomainError("need t >= dt for the centred time difference")
    dx = x[1] - x[0]
    rt = (np.asarray(rho(t + dt, x)) - np.asarray(rho(t - dt, x))) / (2.0 * dt)
    flux = np.asarray(rho(t, x)) * spec.u1(t, x)
    fx = (flux[2:] - flux[:-2]) / (2.0 * dx)
    return float(np.max(np.abs(rt[1:-1] + fx)))


def has_inflow(spec, times):
    for t in times:
        for xb, n in spec.domain.boundary_samples():
            if float(np.sum(spec.value(t, xb[None, :])[0] * n)) < 0:
                return True
    return False


def _lq_norm(g, dx, q):
    g = np.abs(g)
    if np.isinf(q):
        return float(g.max())
    return float((np.sum(g**q) * dx) ** (1.0 / q))


@dataclass
class RegularityReport:
    times: np.ndarray
    norms: np.ndarray
    initial_norm: float
    sup_norm: float
    constant: float
    q: float
    support: list = field(default_factory=list)
    predicted_support: list = field(default_factory=list)

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.norms)))


def regularity_propagation_check(rho0, spec, law, q, times, x, dt=DEFAULT_DT):
    """Track the discrete ``L^q`` norm of ``d/dx rho^(gamma-1)`` along the flow.

    The constant reported is ``sup_t norm(t) / (1 + norm(0))``; no inflow is
    allowed.
    """
    times = np.asarray(times, dtype=float)
    if has_inflow(spec, np.linspace(0.0, times.max(), 11)):
        raise UnsupportedConfiguration("regularity propagation requires an empty inflow boundary")
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    g = lambda r: np.gradient(np.maximum(r, 0.0) ** (law.gamma - 1.0), dx)
    initial = _lq_norm(g(rho0(x)), dx, q)
    norms, support, predicted = [], [], []
    for t in times:
        r = density_from_characteristics(rho0, None, spec, t, x, dt)
        norms.append(_lq_norm(g(r), dx, q))
        pos = x[r > 0]
        support.append((float(pos.min()), float(pos.max())) if pos.size else None)
        if rho0.support_radius is not None:
            R = rho0.support_radius
            ends = flow_forward(spec, np.array([-R, R]), t, dt)
            predicted.append((float(ends[0]), float(ends[1])))
    norms = np.array(norms)
    sup = float(norms.max())
    return RegularityReport(
        times=times,
        norms=norms,
        initial_norm=initial,
        sup_norm=sup,
        constant=sup / (1.0 + initial),
        q=q,
        support=support,
        predicted_support=predicted,
    )


@dataclass
class DecayReport:
    beta_fit: float
    beta_initial_fit: float
    beta_expected: Optional[float]
    window: tuple
    rel_error: float
    passed: bool


def _tail_slope(r, xs):
    mask = r > 0
    if mask.sum() < 8:
        raise DomainError("tail grid too short: fewer than 8 positive samples")
    slope = np.polyfit(np.log(np.abs(xs[mask])), np.log(r[mask]), 1)[0]
    return -float(slope)


def decay_propagation_check(rho0, spec, law, t, r_fit=None, n_fit=64, dt=DEFAULT_DT, rtol=0.10):
    """Fit the polynomial tail exponent of the transported density.

    The fit uses ``|x|`` in ``[r_fit, 2 r_fit]`` on both sides, beyond the
    velocity support radius; the expected exponent is
    ``(alpha - 1)/(gamma - 1)`` for the declared initial decay ``alpha``.
    """
    if spec.support_radius is None:
        raise DomainError("decay check needs a compactly supported velocity field")
    if r_fit is None:
        r_fit = max(2.0 * spec.support_radius, 20.0)
    if r_fit <= spec.support_radius or n_fit < 8:
        raise DomainError("tail grid too short: window must lie beyond the velocity support")
    half = np.geomspace(r_fit, 2.0 * r_fit, n_fit)
    xs = np.concatenate([-half[::-1], half])
    rho_t = density_from_characteristics(rho0, None, spec, t, xs, dt)
    beta = _tail_slope(rho_t, xs)
    beta0 = _tail_slope(rho0(xs), xs)
    expected = None
    if rho0.alpha is not None:
        expected = (rho0.alpha - 1.0) / (law.gamma - 1.0)
    ref = expected if expected is not None else beta0
    rel = abs(beta - ref) / abs(ref)
    return DecayReport(beta, beta0, expected, (r_fit, 2.0 * r_fit), rel, rel <= rtol)


def equilibrium_profile(G, law, c=0.0):
    """Density with ``P'(rho) = [G + c]^+``; vanishes where ``G + c <= 0``."""
    return DensityProfile(
        lambda x: law.dP_inverse(np.maximum(np.asarray(G(x), dtype=float) + c, 0.0)),
        name="equilibrium",
    )


def mass_threshold(gamma):
    if not 1.0 < gamma <= 2.0:
        raise DomainError("gamma must lie in (1, 2]")
    return max(2.0, 3.0 * gamma - 2.0)


def mass_criterion(alpha, gamma):
    """Decay exponent admissible for the whole-space result: ``alpha > max(2, 3 gamma - 2)``."""
    return bool(alpha > mass_threshold(gamma))
