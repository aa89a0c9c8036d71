"""Pressure law, pressure potential and convex dissipation potentials.

All functions accept scalars or numpy arrays and broadcast.  Symmetric
tensors are plain arrays whose two trailing axes have length ``dim``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionError, DomainError

__all__ = [
    "PressureLaw",
    "DissipationPotential",
    "sym_matrix",
    "pressure",
    "pressure_potential",
    "bregman_pressure",
    "convexity_constant",
    "convexity_constant_scan",
    "dissipation_value",
    "subgradient",
    "conjugate",
    "fenchel_young_residual",
    "coercivity_gap",
    "estimate_coercivity_constant",
]


def _nonneg(rho, name="rho"):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(np.isnan(rho)):
        raise DomainError(f"{name} must be nonnegative")
    return rho


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class PressureLaw:
    """Isentropic pressure ``p = a * rho**gamma`` with ``1 < gamma <= 2``."""

    a: float = 1.0
    gamma: float = 1.5

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"pressure coefficient a must be positive, got {self.a}")
        if not 1.0 < self.gamma <= 2.0:
            raise DomainError(f"gamma must lie in (1, 2], got {self.gamma}")

    def p(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a * rho**self.gamma

    def dp(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a * self.gamma * rho ** (self.gamma - 1.0)

    def P(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a / (self.gamma - 1.0) * rho**self.gamma

    def dP(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a * self.gamma / (self.gamma - 1.0) * rho ** (self.gamma - 1.0)

    def ddP(self, rho):
        """Second derivative ``p'(rho)/rho``; singular at 0 when gamma < 2."""
        rho = np.asarray(rho, dtype=float)
        return self.a * self.gamma * rho ** (self.gamma - 2.0)

    def dP_inverse(self, s):
        """Inverse of ``P'`` on ``[0, inf)``."""
        s = np.asarray(s, dtype=float)
        base = (self.gamma - 1.0) * s / (self.a * self.gamma)
        return np.maximum(base, 0.0) ** (1.0 / (self.gamma - 1.0))

    def sound_speed(self, rho):
        return np.sqrt(self.dp(np.maximum(rho, 0.0)))


def pressure(law, rho):
    return _out(law.p(_nonneg(rho)))


def pressure_potential(law, rho):
    return _out(law.P(_nonneg(rho)))


def bregman_pressure(law, rho, r):
    """Gap of the pressure potential above its tangent at ``r``.

    ``r`` must be positive unless ``gamma == 2``: the relative energy
    machinery divides by the reference density, so the vacuum reference is
    handled by shifting it (see ``relenergy.epsilon_shift``).
    """
    rho = _nonneg(rho)
    r = _nonneg(r, "r")
    if law.gamma < 2.0 and np.any(r <= 0):
        raise DomainError(
            "reference density must be positive for gamma < 2; shift it by epsilon"
        )
    value = law.P(rho) - law.dP(r) * (rho - r) - law.P(r)
    # rounding can push the exact zero at rho == r slightly negative
    return _out(np.maximum(value, 0.0))


def convexity_constant(law, rho_bar):
    """Largest ``c`` with ``bregman(rho, r) >= c (rho - r)**2`` on ``[0, rho_bar]``."""
    if not rho_bar > 0:
        raise DomainError("rho_bar must be positive")
    return 0.5 * law.a * law.gamma * rho_bar ** (law.gamma - 2.0)


def convexity_constant_scan(law, rho_bar, n=400):
    """Grid estimate of :func:`convexity_constant` by ratio minimization."""
    grid = np.linspace(0.0, rho_bar, n + 1)[1:]
    rho, r = np.meshgrid(np.concatenate([[0.0], grid]), grid, indexing="ij")
    mask = rho != r
    ratio = (law.P(rho) - law.dP(r) * (rho - r) - law.P(r))[mask] / (rho - r)[mask] ** 2
    return float(ratio.min())


def sym_matrix(entries, dim=None):
    """Validate a symmetric tensor (or stack of them) and return it as an array."""
    D = np.asarray(entries, dtype=float)
    if D.ndim == 0:
        D = D.reshape(1, 1)
    if D.ndim < 2 or D.shape[-1] != D.shape[-2]:
        raise DimensionError(f"expected square trailing axes, got shape {D.shape}")
    if D.shape[-1] not in (1, 2, 3):
        raise DimensionError("dimension must be 1, 2 or 3")
    if dim is not None and D.shape[-1] != dim:
        raise DimensionError(f"tensor dimension {D.shape[-1]} does not match {dim}")
    if not np.array_equal(D, np.swapaxes(D, -1, -2)):
        raise DimensionError("tensor is not symmetric")
    return D


def _trace(D):
    return np.trace(D, axis1=-2, axis2=-1)


def _ddot(A, B):
    return np.einsum("...ij,...ij->...", A, B)


def _identity_like(D):
    return np.broadcast_to(np.eye(D.shape[-1]), D.shape)


@dataclass(frozen=True)
class DissipationPotential:
    """Convex dissipation potential of at most quadratic growth.

    ``F(D) = 2 mu |D - beta tr(D) I|^2 + lam/2 tr(D)^2`` for ``kind="newtonian"``;
    the ``quadratic-power-law`` variant adds
    ``kappa/power * ((1 + |D - beta tr(D) I|^2)**(power/2) - 1)`` with
    ``1 <= power <= 2``, which keeps both the quadratic upper bound and the
    coercivity constant ``2 mu``.

    ``beta`` is ``1/dim`` for dim 2 and 3 and ``0`` in one dimension, where
    the traceless projection is void and the whole strain is penalised.
    """

    kind: str = "newtonian"
    mu: float = 1.0
    lam: float = 0.0
    dim: int = 3
    kappa: float = 0.0
    power: float = 1.5

    def __post_init__(self):
        if self.kind not in ("newtonian", "quadratic-power-law"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.dim not in (1, 2, 3):
            raise DimensionError("dim must be 1, 2 or 3")
        if self.mu < 0 or self.lam < 0 or self.kappa < 0:
            raise DomainError("viscosity coefficients must be nonnegative")
        if self.kind == "newtonian" and not self.mu > 0:
            raise DomainError("newtonian potential needs mu > 0")
        if self.kind == "quadratic-power-law":
            if not self.mu > 0:
                raise DomainError("power-law variant needs mu > 0 for coercivity")
            if not 1.0 <= self.power <= 2.0:
                raise DomainError("power must lie in [1, 2]")

    @classmethod
    def one_d(cls, nu):
        """1-D Newtonian potential ``nu/2 D**2`` with stress ``S = nu D``."""
        return cls("newtonian", mu=nu / 4.0, lam=0.0, dim=1)

    @property
    def beta_trace(self):
        return 0.0 if self.dim == 1 else 1.0 / self.dim

    @property
    def coercivity_constant(self):
        return 2.0 * self.mu

    @property
    def _kappa(self):
        return self.kappa if self.kind == "quadratic-power-law" else 0.0

    @property
    def growth_constant(self):
        """``C`` in ``F(D) <= C |D|**2``."""
        return 2.0 * self.mu + 0.5 * self._kappa + 0.5 * self.lam * self.dim

    def deviator(self, D):
        return D - self.beta_trace * _trace(D)[..., None, None] * _identity_like(D)

    def _radial_coeff(self):
        # coefficient of |A|^2 in the radial part; in 1-D the trace term merges in
        return 2.0 * self.mu + (0.5 * self.lam if self.dim == 1 else 0.0)

    def _radial(self, s2):
        val = self._radial_coeff() * s2
        if self._kappa:
            val = val + self._kappa / self.power * ((1.0 + s2) ** (self.power / 2) - 1.0)
        return val

    def _radial_conjugate(self, sigma):
        c = self._radial_coeff()
        sigma = np.asarray(sigma, dtype=float)
        if not self._kappa:
            return sigma**2 / (4.0 * c)
        k, r = self._kappa, self.power

        def one(sig):
            if sig == 0.0:
                return 0.0
            dphi = lambda s: 2.0 * c * s + k * s * (1.0 + s * s) ** (r / 2 - 1) - sig
            s = brentq(dphi, 0.0, sig / (2.0 * c), xtol=1e-300, rtol=1e-15)
            return sig * s - (c * s * s + k / r * ((1.0 + s * s) ** (r / 2) - 1.0))

        return np.vectorize(one, otypes=[float])(sigma)

    def value(self, D):
        A = self.deviator(D)
        val = self._radial(_ddot(A, A))
        if self.dim > 1:
            val = val + 0.5 * self.lam * _trace(D) ** 2
        return val

    def gradient(self, D):
        A = self.deviator(D)
        s2 = _ddot(A, A)
        coeff = 2.0 * self._radial_coeff()
        if self._kappa:
            coeff = coeff + self._kappa * (1.0 + s2) ** (self.power / 2 - 1.0)
        S = np.asarray(coeff)[..., None, None] * A
        if self.dim > 1:
            S = S + self.lam * _trace(D)[..., None, None] * _identity_like(D)
        return S

    def conjugate(self, S):
        if self.dim == 1:
            return self._radial_conjugate(np.abs(S[..., 0, 0]))
        trS = _trace(S)
        S0 = S - (trS / self.dim)[..., None, None] * _identity_like(S)
        val = self._radial_conjugate(np.sqrt(_ddot(S0, S0)))
        if self.lam > 0:
            val = val + trS**2 / (2.0 * self.lam * self.dim**2)
        else:
            scale = np.maximum(1.0, np.sqrt(_ddot(S, S)))
            val = np.where(np.abs(trS) <= 1e-12 * scale, val, np.inf)
        return val


def _pair(pot, *tensors):
    return [sym_matrix(T, pot.dim) for T in tensors]


def dissipation_value(pot, D):
    (D,) = _pair(pot, D)
    return _out(pot.value(D))


def subgradient(pot, D):
    """The (unique) gradient of a smooth potential at ``D``."""
    (D,) = _pair(pot, D)
    return pot.gradient(D)


def conjugate(pot, S):
    """Legendre-Fenchel conjugate; ``inf`` off the effective domain."""
    (S,) = _pair(pot, S)
    return _out(pot.conjugate(S))


def fenchel_young_residual(pot, D, S):
    D, S = _pair(pot, D, S)
    return _out(pot.value(D) + pot.conjugate(S) - _ddot(S, D))


def coercivity_gap(pot, D, Q):
    """Return ``(gap, lower_bound)`` of the strict-convexity estimate.

    ``gap = F(D+Q) - F(D) - S:Q`` with ``S`` the gradient at ``D`` and
    ``lower_bound = 2 mu |Q - beta tr(Q) I|**2``.
    """
    D, Q = _pair(pot, D, Q)
    S = pot.gradient(D)
    gap = pot.value(D + Q) - pot.value(D) - _ddot(S, Q)
    A = pot.deviator(Q)
    lower = pot.coercivity_constant * _ddot(A, A)
    return _out(gap), _out(lower)


def estimate_coercivity_constant(pot, n_samples=2000, scale=3.0, rng=None):
    """Measured ``min gap / |Q - beta tr(Q) I|**2`` over random ``(D, Q)``."""
    rng = np.random.default_rng(rng)
    d = pot.dim
    A = rng.normal(scale=scale, size=(2, n_samples, d, d))
    D = 0.5 * (A[0] + np.swapaxes(A[0], -1, -2))
    Q = 0.5 * (A[1] + np.swapaxes(A[1], -1, -2))
    gap, _ = coercivity_gap(pot, D, Q)
    Q0 = pot.deviator(Q)
    norm = _ddot(Q0, Q0)
    keep = norm > 1e-12
    return float(np.min(np.asarray(gap)[keep] / norm[keep]))
