"""Relative energy between a discrete weak solution and a reference pair.

A reference pair ``(rho~, u~)`` plays the role of the strong solution.  It
can be analytic, built by characteristics from a prescribed velocity, or
restricted from a finer solver run.  This module evaluates the relative
energy, every term of the relative energy inequality along a trajectory,
the epsilon-shift scaling study used to reach vacuum references, the
density-split estimates and a Gronwall certificate.
"""

from dataclasses import dataclass, field, replace
import csv
from typing import Callable, Optional

import numpy as np

from .constitutive import DissipationPotential, bregman_pressure, convexity_constant, convexity_constant_scan
from .errors import DomainError
from .solver1d import Grid1D, _face_gradients
from .transport import density_from_characteristics

__all__ = [
    "ReferencePair",
    "RelativeEnergyTrace",
    "Certificate",
    "relative_energy",
    "epsilon_shift",
    "epsilon_vanishing_terms",
    "rei_terms",
    "strong_residual",
    "density_split_bound",
    "gronwall_monitor",
    "korn_identity_1d",
    "write_certificate_csv",
    "lq_norm",
]

C_GRAD = 2.0  # weight of ||d_x u~||_inf in the Gronwall rate
C_RES = 1.0  # weight of ||b||_{L^q}


def lq_norm(values, dx, q):
    """Discrete ``L^q`` norm with cell weight ``dx``."""
    v = np.abs(np.asarray(values, dtype=float))
    if np.isinf(q):
        return float(v.max()) if v.size else 0.0
    return float((np.sum(v**q) * dx) ** (1.0 / q))


def _fd(fn, h):
    return lambda t, x: (fn(t, x + h) - fn(t, x - h)) / (2.0 * h)


def _fd_time(fn, h):
    def d(t, x):
        lo = max(t - h, 0.0)
        return (fn(t + h, x) - fn(lo, x)) / (t + h - lo)

    return d


class _Samples:
    """Snapshots on a fixed spatial grid, interpolated linearly in ``t`` and ``x``."""

    def __init__(self, times, x, rho, u):
        self.times = np.asarray(times, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.rho = np.asarray(rho, dtype=float)
        self.u = np.asarray(u, dtype=float)
        if self.rho.shape != (len(self.times), len(self.x)) or self.u.shape != self.rho.shape:
            raise DomainError("sample arrays must have shape (n_times, n_points)")
        order = 2 if len(self.x) > 2 else 1
        torder = 2 if len(self.times) > 2 else 1
        self.rho_x = np.gradient(self.rho, self.x, axis=1, edge_order=order)
        self.u_x = np.gradient(self.u, self.x, axis=1, edge_order=order)
        if len(self.times) > 1:
            self.rho_t = np.gradient(self.rho, self.times, axis=0, edge_order=torder)
            self.u_t = np.gradient(self.u, self.times, axis=0, edge_order=torder)
        else:
            self.rho_t = np.zeros_like(self.rho)
            self.u_t = np.zeros_like(self.u)
        self._dP_x = {}

    def _weights(self, t):
        T = self.times
        if t <= T[0] or len(T) == 1:
            return 0, 0, 0.0
        if t >= T[-1]:
            return len(T) - 1, len(T) - 1, 0.0
        j = int(np.searchsorted(T, t, side="right"))
        i = j - 1
        if np.isclose(t, T[i], rtol=0, atol=1e-12 * max(1.0, abs(t))):
            return i, i, 0.0
        return i, j, (t - T[i]) / (T[j] - T[i])

    def evaluate(self, arr, t, x):
        i, j, w = self._weights(t)
        row = arr[i] if w == 0.0 else (1.0 - w) * arr[i] + w * arr[j]
        x = np.asarray(x, dtype=float)
        if x.shape == self.x.shape and np.array_equal(x, self.x):
            return row.copy()
        return np.interp(x, self.x, row)

    def dP_x(self, law, shift, t, x):
        key = (law, shift)
        if key not in self._dP_x:
            order = 2 if len(self.x) > 2 else 1
            self._dP_x[key] = np.gradient(law.dP(self.rho + shift), self.x, axis=1, edge_order=order)
        return self.evaluate(self._dP_x[key], t, x)


@dataclass
class ReferencePair:
    """Reference density and velocity, callables of ``(t, x)``.

    Derivative callables are optional; a pair without them is treated as
    non-differentiable unless it carries samples.  ``regularity`` is the
    declared regularity report required by :func:`rei_terms`; ``shift`` is
    the constant added by :func:`epsilon_shift`.
    """

    rho_fn: Callable
    u_fn: Callable
    provenance: str = "analytic"
    rho_t: Optional[Callable] = None
    rho_x: Optional[Callable] = None
    u_t: Optional[Callable] = None
    u_x: Optional[Callable] = None
    regularity: Optional[dict] = None
    shift: float = 0.0
    samples: Optional[_Samples] = field(default=None, repr=False)

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_functions(cls, rho, u, rho_t=None, rho_x=None, u_t=None, u_x=None, regularity=None):
        """Analytic pair; differentiable when all four derivatives are given."""
        complete = all(f is not None for f in (rho_t, rho_x, u_t, u_x))
        if regularity is None and complete:
            regularity = {"provenance": "analytic", "derivatives": "analytic"}
        return cls(rho, u, "analytic", rho_t, rho_x, u_t, u_x, regularity)

    @classmethod
    def from_samples(cls, times, x, rho, u, provenance="fine-solver-run", regularity=None):
        s = _Samples(times, x, rho, u)
        report = {"provenance": provenance, "derivatives": "finite differences of samples"}
        report.update(regularity or {})
        return cls(
            lambda t, y: s.evaluate(s.rho, t, y),
            lambda t, y: s.evaluate(s.u, t, y),
            provenance,
            lambda t, y: s.evaluate(s.rho_t, t, y),
            lambda t, y: s.evaluate(s.rho_x, t, y),
            lambda t, y: s.evaluate(s.u_t, t, y),
            lambda t, y: s.evaluate(s.u_x, t, y),
            report,
            samples=s,
        )

    @classmethod
    def from_fine_run(cls, fine_traj, coarse_grid):
        """Restrict a finer solver trajectory onto ``coarse_grid``.

        Density is block-averaged; velocity is the momentum-weighted mean of
        each block (the plain mean of the viscous velocity in vacuum blocks).
        """
        fg = fine_traj.grid
        factor = fg.n_cells // coarse_grid.n_cells
        if factor * coarse_grid.n_cells != fg.n_cells or not (
            np.isclose(fg.x_min, coarse_grid.x_min) and np.isclose(fg.x_max, coarse_grid.x_max)
        ):
            raise DomainError("fine grid must refine the coarse grid by an integer factor")
        nt = len(fine_traj.times)
        rho = fine_traj.rho.reshape(nt, -1, factor)
        mom = fine_traj.mom.reshape(nt, -1, factor)
        vel = fine_traj.vel.reshape(nt, -1, factor)
        rho_c = rho.mean(axis=2)
        msum, rsum = mom.sum(axis=2), rho.sum(axis=2)
        top = rho_c.max(axis=1, keepdims=True)
        vac = rho_c <= 1e-14 * top
        u_c = np.where(vac, vel.mean(axis=2), msum / np.where(vac, 1.0, rsum))
        ref = cls.from_samples(fine_traj.times, coarse_grid.centers, rho_c, u_c, "fine-solver-run",
                               {"refinement_factor": factor})
        return ref

    @classmethod
    def from_characteristics(cls, rho0, spec, rho_B=None, dt=1e-3, probe=None, tol=1e-6):
        """Density transported along the characteristics of ``spec``.

        The continuity residual is evaluated by centred differences; with
        ``probe=(times, x)`` it is also measured at build time and must stay
        below ``tol``.
        """
        from .transport import continuity_residual

        rho = lambda t, x: np.asarray(density_from_characteristics(rho0, rho_B, spec, t, np.asarray(x, dtype=float), dt))
        h = 1e-4
        report = {"provenance": "characteristics-built", "dt": dt}
        if probe is not None:
            times, x = probe
            worst = max(continuity_residual(rho, spec, x, t, h) for t in times)
            report["continuity_residual"] = worst
            if worst > tol:
                raise DomainError(f"continuity residual {worst:.3g} exceeds the declared tolerance {tol:.3g}")
        return cls(
            rho,
            spec.u1,
            "characteristics-built",
            _fd_time(rho, h),
            _fd(rho, h),
            _fd_time(spec.u1, h),
            spec.ux1,
            report,
        )

    # -- evaluation --------------------------------------------------------
    @property
    def differentiable(self):
        return self.samples is not None or all(
            f is not None for f in (self.rho_t, self.rho_x, self.u_t, self.u_x)
        )

    def rho(self, t, x):
        return np.asarray(self.rho_fn(t, x), dtype=float) + 0.0 * np.asarray(x) + self.shift

    def u(self, t, x):
        return np.asarray(self.u_fn(t, x), dtype=float) + 0.0 * np.asarray(x)

    def _need(self, f, name):
        if f is None:
            raise DomainError(f"reference pair is not differentiable: missing {name}")
        return f

    def du_dx(self, t, x):
        return np.asarray(self._need(self.u_x, "u_x")(t, x), dtype=float) + 0.0 * np.asarray(x)

    def du_dt(self, t, x):
        return np.asarray(self._need(self.u_t, "u_t")(t, x), dtype=float) + 0.0 * np.asarray(x)

    def continuity_defect(self, t, x):
        """``d_t rho~ + d_x(rho~ u~)``; a shift adds ``epsilon d_x u~``."""
        rt = self._need(self.rho_t, "rho_t")(t, x)
        rx = self._need(self.rho_x, "rho_x")(t, x)
        r = self.rho(t, x)
        return np.asarray(rt) + np.asarray(rx) * self.u(t, x) + r * self.du_dx(t, x)

    def grad_dP(self, law, t, x):
        """``d_x P'(rho~)``; zero where the reference density vanishes."""
        if self.samples is not None:
            return self.samples.dP_x(law, self.shift, t, x)
        r = self.rho(t, x)
        rx = np.asarray(self._need(self.rho_x, "rho_x")(t, x), dtype=float)
        pos = r > 0
        out = np.zeros_like(r)
        out[pos] = law.ddP(r[pos]) * rx[pos]
        return out

    def face_gradient(self, t, grid, bc):
        """Gradient of ``u~`` on the faces used by the solver's dissipation sum."""
        if self.samples is not None:
            return _face_gradients(self.u(t, grid.centers), grid, bc, t)[0]
        faces = grid.faces[1:] if bc.periodic else grid.faces
        return self.du_dx(t, faces)


def epsilon_shift(ref, epsilon):
    """The pair ``(rho~ + epsilon, u~)``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    out = replace(ref, shift=ref.shift + float(epsilon))
    out.provenance = ref.provenance
    return out


def _rel_energy_cells(rho, u, rt, ut, law):
    return 0.5 * rho * (u - ut) ** 2 + bregman_pressure(law, rho, rt)


def relative_energy(state, ref, law, t=None):
    """``sum [rho |u - u~|^2 / 2 + Bregman(rho, rho~)] dx`` at the state's time.

    Raises :class:`DomainError` where ``rho~ = 0`` and ``gamma < 2``; shift
    the reference with :func:`epsilon_shift` in that case.
    """
    t = state.t if t is None else t
    x = state.grid.centers
    return float(np.sum(_rel_energy_cells(state.rho, state.u, ref.rho(t, x), ref.u(t, x), law)) * state.grid.dx)


def strong_residual(ref, law, grid, t):
    """``b = d_t u~ + u~ d_x u~ + d_x P'(rho~)`` at the cell centres."""
    if not ref.differentiable:
        raise DomainError("strong residual needs a differentiable reference pair")
    x = grid.centers if isinstance(grid, Grid1D) else np.asarray(grid, dtype=float)
    return ref.du_dt(t, x) + ref.u(t, x) * ref.du_dx(t, x) + ref.grad_dP(law, t, x)


# --------------------------------------------------------------------------
# epsilon shift


@dataclass
class EpsilonReport:
    epsilons: np.ndarray
    terms: np.ndarray  # shape (3, n_eps): initial penalty, divergence term, compression term
    slopes: np.ndarray
    expected: float
    passed: bool

    @property
    def slope_iii(self):
        return float(self.slopes[2])


def _slope(eps, vals):
    vals = np.asarray(vals)
    if np.all(vals == 0.0):
        return np.inf
    if np.any(vals <= 0.0):
        return np.nan
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def epsilon_vanishing_terms(traj, ref, law, epsilons, rtol=0.10):
    """Scaling of the three terms that vanish as the shift ``epsilon -> 0``.

    (i) ``|int P(rho0) + eps P'(rho0) - P(rho0 + eps)|``;
    (ii) ``|eps int int p'(rho~ + eps) d_x u~|``;
    (iii) ``int ||eps rho p'(rho~ + eps) / (rho~ + eps)||_{L^gamma} dt``.
    Slopes are log-log fits; the check asks slope (iii) to be within
    ``rtol`` of ``gamma - 1``.
    """
    eps = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    if eps.size < 3:
        raise DomainError("need at least 3 epsilons for a slope fit")
    if np.any(eps <= 0):
        raise DomainError("epsilons must be positive")
    grid = traj.grid
    x, dx, T = grid.centers, grid.dx, traj.times
    g = law.gamma
    rho0 = traj.rho[0]
    base = [ref.rho(t, x) for t in T]
    div = [ref.du_dx(t, x) for t in T]
    terms = np.zeros((3, eps.size))
    for j, e in enumerate(eps):
        terms[0, j] = abs(np.sum(law.P(rho0) + e * law.dP(rho0) - law.P(rho0 + e)) * dx)
        ii = [np.sum(law.dp(r + e) * d) * dx for r, d in zip(base, div)]
        terms[1, j] = abs(e * _trapz(ii, T))
        iii = [lq_norm(e * rho * law.dp(r + e) / (r + e), dx, g) for rho, r in zip(traj.rho, base)]
        terms[2, j] = _trapz(iii, T) if len(T) > 1 else iii[0]
    slopes = np.array([_slope(eps, terms[k]) for k in range(3)])
    expected = g - 1.0
    passed = bool(np.isfinite(slopes[2]) and abs(slopes[2] - expected) <= rtol * expected)
    return EpsilonReport(eps, terms, slopes, expected, passed)


def _trapz(values, times):
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def _cumtrapz(values, times):
    values = np.asarray(values, dtype=float)
    inc = 0.5 * (values[1:] + values[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(inc)])


# --------------------------------------------------------------------------
# relative energy inequality


@dataclass
class RelativeEnergyTrace:
    """Time series of the relative energy inequality along a trajectory.

    ``rates`` holds the instantaneous integrands (per unit time) and
    ``lhs``/``rhs`` the accumulated sides.  ``residual_rate`` is the part of
    the right-hand side not bounded by ``chi * E``; ``violation`` is
    ``lhs - rhs``.
    """

    times: np.ndarray
    E: np.ndarray
    chi: np.ndarray
    residual_rate: np.ndarray
    violation: np.ndarray
    lhs: Optional[np.ndarray] = None
    rhs: Optional[np.ndarray] = None
    rates: dict = field(default_factory=dict)
    b_norm: Optional[np.ndarray] = None
    dx: float = 0.0
    dt: float = 0.0
    q: float = np.inf
    provenance: str = "synthetic"

    @classmethod
    def synthetic(cls, times, E, chi, residual_rate, violation=None):
        times = np.asarray(times, dtype=float)
        E = np.asarray(E, dtype=float)
        z = np.zeros_like(times)
        return cls(
            times=times,
            E=E,
            chi=np.broadcast_to(np.asarray(chi, dtype=float), times.shape).copy(),
            residual_rate=np.broadcast_to(np.asarray(residual_rate, dtype=float), times.shape).copy(),
            violation=z if violation is None else np.asarray(violation, dtype=float),
        )

    @property
    def max_violation(self):
        return float(max(0.0, np.max(self.violation)))

    @property
    def violation_constant(self):
        """``C`` in ``lhs <= rhs + C (dx + dt)``."""
        h = self.dx + self.dt
        return self.max_violation / h if h > 0 else np.inf


def rei_terms(traj, ref, law, pot=None, bc=None, ledger=None, force=None, include_defects=False):
    """Evaluate every term of the relative energy inequality along ``traj``.

    Left side: relative energy increment, the Fenchel-Young dissipation
    block ``F(u_x) + F*(S) - S u~_x``, boundary Bregman fluxes and (with
    ``include_defects``) the energy defect from ``ledger``.  Right side:
    kinetic term with ``u~_x``, pressure Bregman times ``u~_x``, the
    strong-residual term with ``b``, the forcing term, the continuity
    residual term and (with ``include_defects``) the Reynolds-defect term.
    Space sums use cell midpoints, time integrals the trapezoid rule.
    """
    if ref.regularity is None:
        raise DomainError("reference pair carries no regularity report")
    bc = traj.bc if bc is None else bc
    pot = DissipationPotential.one_d(traj.nu) if pot is None else pot
    force = traj.force if force is None else force
    grid = traj.grid
    x, dx = grid.centers, grid.dx
    T = np.asarray(traj.times)
    g = law.gamma
    q = 2.0 * g / (g - 1.0) if g > 1 else np.inf
    if include_defects and ledger is None:
        raise DomainError("include_defects needs the run's energy ledger")
    if include_defects and getattr(ledger, "cell_defect_history", None) is None:
        raise DomainError("ledger has no per-snapshot defect history")
    if ref.samples is None and not bc.periodic:
        uL, uR = bc.velocities(0.0)
        ends = ref.u(0.0, np.array([grid.x_min, grid.x_max]))
        if np.max(np.abs(ends - [uL, uR])) > 1e-8 * max(1.0, abs(uL), abs(uR)):
            raise DomainError("reference velocity does not match the wall velocity")

    names = ["dissipation_block", "fy_regroup", "boundary", "T1_kinetic", "T2_pressure",
             "T3_strong", "Tf_force", "T4_continuity", "T5_reynolds"]
    rates = {k: np.zeros(len(T)) for k in names}
    E = np.zeros(len(T))
    chi = np.zeros(len(T))
    bnorm = np.zeros(len(T))
    resid = np.zeros(len(T))
    inflow_part = np.zeros(len(T))
    defect_mass = np.zeros(len(T))
    u_all = traj.u
    for k, t in enumerate(T):
        rho, u = traj.rho[k], u_all[k]
        rt, ut = ref.rho(t, x), ref.u(t, x)
        utx = ref.du_dx(t, x)
        E[k] = np.sum(_rel_energy_cells(rho, u, rt, ut, law)) * dx
        # dissipation block and its Fenchel-Young regrouping on the faces
        gw, h = _face_gradients(traj.vel[k], grid, bc, t)
        gr = ref.face_gradient(t, grid, bc)
        S = pot.gradient(gw[:, None, None])
        Sr = pot.gradient(gr[:, None, None])
        fy = pot.value(gw[:, None, None]) + pot.conjugate(S)
        rates["dissipation_block"][k] = np.sum((fy - S[:, 0, 0] * gr) * h)
        rates["fy_regroup"][k] = np.sum(Sr[:, 0, 0] * (gr - gw) * h)
        # boundary Bregman terms; the reference trace is its wall-adjacent cell value
        if not bc.periodic:
            uL, uR = bc.velocities(t)
            inL, inR = bc.inflow(t)
            total = 0.0
            for un, wall_rho, ref_rho, inflow, side in (
                (-uL, rho[0], rt[0], inL, "left"),
                (uR, rho[-1], rt[-1], inR, "right"),
            ):
                if inflow:
                    val = float(bregman_pressure(law, bc.inflow_density(side, t), ref_rho)) * un
                    inflow_part[k] += val
                else:
                    val = float(bregman_pressure(law, wall_rho, ref_rho)) * max(un, 0.0)
                total += val
            rates["boundary"][k] = total
        rates["T1_kinetic"][k] = -np.sum(rho * (ut - u) ** 2 * utx) * dx
        pbreg = (g - 1.0) * bregman_pressure(law, rho, rt)
        rates["T2_pressure"][k] = -np.sum(pbreg * utx) * dx
        b = strong_residual(ref, law, grid, t)
        rates["T3_strong"][k] = np.sum(rho * (ut - u) * b) * dx
        if force is not None:
            rates["Tf_force"][k] = -np.sum(rho * (ut - u) * force(t, x)) * dx
        cont = ref.continuity_defect(t, x)
        rates["T4_continuity"][k] = np.sum(law.dp(rt) * (1.0 - rho / rt) * cont) * dx
        if include_defects:
            R = np.maximum(ledger.cell_defect_history[k], 0.0)
            defect_mass[k] = R.sum()
            rates["T5_reynolds"][k] = -np.sum(utx * R)
        bnorm[k] = lq_norm(b, dx, q)
        chi[k] = C_GRAD * float(np.max(np.abs(utx))) + C_RES * bnorm[k]
        resid[k] = (
            max(rates["T3_strong"][k] + rates["fy_regroup"][k], 0.0)
            + max(rates["T4_continuity"][k], 0.0)
            + max(rates["T5_reynolds"][k], 0.0)
            + max(rates["Tf_force"][k], 0.0)
            + max(-inflow_part[k], 0.0)
        )
    cum = {k: _cumtrapz(v, T) for k, v in rates.items()}
    lhs = E - E[0] + cum["dissipation_block"] + cum["boundary"] + defect_mass
    rhs = (cum["T1_kinetic"] + cum["T2_pressure"] + cum["T3_strong"] + cum["Tf_force"]
           + cum["T4_continuity"] + cum["T5_reynolds"])
    dts = np.diff(T)
    return RelativeEnergyTrace(
        times=T,
        E=E,
        chi=chi,
        residual_rate=resid,
        violation=lhs - rhs,
        lhs=lhs,
        rhs=rhs,
        rates=rates,
        b_norm=bnorm,
        dx=dx,
        dt=float(dts.max()) if dts.size else 0.0,
        q=q,
        provenance=ref.provenance,
    )


# --------------------------------------------------------------------------
# Gronwall certificate


@dataclass
class Certificate:
    passed: bool
    margin: float
    first_violation: Optional[float]
    tau: np.ndarray
    E: np.ndarray
    bound: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    chi: np.ndarray
    provenance: str = "synthetic"

    @property
    def margins(self):
        return self.bound - self.E

    def summary(self, scenario):
        return f"CERTIFY {scenario} {'PASS' if self.passed else 'FAIL'} margin={self.margin:.6g}"


def _growth_factor(times, chi):
    """Discrete Gronwall factor for trapezoid integrals, ``exp(int chi) + O(dt^2)``.

    From ``E_n <= K_n + sum_k dt_k (chi_{k-1} E_{k-1} + chi_k E_k) / 2``
    with ``K`` nondecreasing, induction gives ``E_n <= K_n * G_n`` with
    ``G_n = prod (1 + dt chi_{k-1}/2) / (1 - dt chi_k/2)``.
    """
    dt = np.diff(times)
    a = 0.5 * dt * chi[:-1]
    c = 0.5 * dt * chi[1:]
    if np.any(c >= 1.0):
        raise DomainError("time step too large for the discrete Gronwall factor (chi*dt >= 2)")
    logs = np.log1p(a) - np.log1p(-c)
    return np.exp(np.concatenate([[0.0], np.cumsum(logs)]))


def gronwall_monitor(trace, rtol=1e-12):
    """Check ``E(tau) <= (E(0) + R(tau)) * exp(int_0^tau chi)`` at every sample.

    ``R(tau)`` accumulates the residual rate and the running maximum of the
    positive part of the inequality violation.
    """
    T = np.asarray(trace.times, dtype=float)
    chi = np.asarray(trace.chi, dtype=float)
    if not np.all(np.isfinite(chi)):
        raise DomainError("Gronwall rate chi must be finite")
    R = _cumtrapz(trace.residual_rate, T) + np.maximum.accumulate(np.maximum(trace.violation, 0.0))
    bound = (trace.E[0] + R) * _growth_factor(T, chi)
    margins = bound - trace.E
    tol = rtol * np.maximum(1.0, np.abs(bound))
    bad = np.flatnonzero(margins < -tol)
    lhs = trace.lhs if trace.lhs is not None else np.full_like(T, np.nan)
    rhs = trace.rhs if trace.rhs is not None else np.full_like(T, np.nan)
    return Certificate(
        passed=bad.size == 0,
        # tau = 0 has zero margin by construction, so report the tightest later sample
        margin=float(margins[1:].min() if margins.size > 1 else margins.min()),
        first_violation=float(T[bad[0]]) if bad.size else None,
        tau=T,
        E=np.asarray(trace.E),
        bound=bound,
        lhs=lhs,
        rhs=rhs,
        chi=chi,
        provenance=trace.provenance,
    )


def write_certificate_csv(cert, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "E", "lhs", "rhs", "margin", "chi"])
        for k in range(len(cert.tau)):
            w.writerow([f"{v:.17g}" for v in (cert.tau[k], cert.E[k], cert.lhs[k], cert.rhs[k],
                                               cert.bound[k] - cert.E[k], cert.chi[k])])


# --------------------------------------------------------------------------
# density split and Korn step


@dataclass
class SplitBound:
    high_part: float
    high_holder: float
    low_part: float
    low_holder: float
    low_young: float
    gap_sq: float
    gap_bound: float
    constants: dict

    @property
    def holds(self):
        tol = 1e-12
        return (
            self.high_part <= self.high_holder + tol
            and self.low_part <= self.low_holder + tol
            and self.low_holder <= self.low_young + tol
            and self.gap_sq <= self.gap_bound + tol
        )


def density_split_bound(state, ref, law, rho_bar=None, delta=1.0, t=None):
    """Split ``int (rho - rho~)(u~ - u) b`` at the density level ``rho_bar``.

    High part (``rho >= rho_bar``): Hoelder with exponents ``2 gamma``, 2
    and ``q = 2 gamma/(gamma - 1)``.  Low part: Hoelder with exponents 2,
    ``2 gamma``, ``q`` followed by Young's inequality with ``delta`` and
    ``c(delta) = 1/(4 delta)``.  The density gap on the low set is bounded
    by the relative energy divided by the convexity constant of ``P`` on
    ``[0, rho_bar]``.
    """
    t = state.t if t is None else t
    grid = state.grid
    x, dx = grid.centers, grid.dx
    rho, u = state.rho, state.u
    rt, ut = ref.rho(t, x), ref.u(t, x)
    if rho_bar is None:
        rho_bar = 2.0 * float(rt.max()) * (1.0 + 1e-12) + 1e-300
    if rho_bar < 2.0 * float(rt.max()):
        raise DomainError("rho_bar must satisfy rho~ <= rho_bar / 2 everywhere")
    g = law.gamma
    q = 2.0 * g / (g - 1.0)
    b = strong_residual(ref, law, grid, t)
    bq = lq_norm(b, dx, q)
    hi = rho >= rho_bar
    lo = ~hi
    integrand = (rho - rt) * (ut - u) * b
    high = float(np.sum(integrand[hi]) * dx)
    root = np.sqrt(np.where(hi, rho - rt, 0.0))
    high_holder = lq_norm(root, dx, 2.0 * g) * lq_norm(root * (u - ut), dx, 2.0) * bq
    low = float(np.sum(integrand[lo]) * dx)
    gap = lq_norm(np.where(lo, rho - rt, 0.0), dx, 2.0)
    vel = lq_norm(u - ut, dx, 2.0 * g)
    low_holder = gap * vel * bq
    low_young = delta * vel**2 + gap**2 * bq**2 / (4.0 * delta)
    cc = convexity_constant(law, rho_bar)
    Erel = float(np.sum(_rel_energy_cells(rho, u, rt, ut, law)) * dx)
    return SplitBound(
        high_part=high,
        high_holder=high_holder,
        low_part=low,
        low_holder=low_holder,
        low_young=low_young,
        gap_sq=gap**2,
        gap_bound=Erel / cc,
        constants={
            "rho_bar": rho_bar,
            "q": q,
            "delta": delta,
            "c_delta": 1.0 / (4.0 * delta),
            "convexity": cc,
            "convexity_scan": convexity_constant_scan(law, rho_bar),
            "gap_constant": 1.0 / cc,
            "b_norm": bq,
        },
    )


def korn_identity_1d(u, u_tilde, grid, nu=1.0, periodic=False):
    """Return ``(sum (S - S~)(u_x - u~_x) h, sum (u_x - u~_x)^2 h)`` over faces.

    In one dimension the deviatoric part of the strain rate is the whole
    gradient, so the first sum equals ``nu`` times the second.  The fields
    must share their wall values; only the difference enters the wall faces.
    """
    from .solver1d import BoundaryData

    u = np.asarray(u, dtype=float)
    ut = np.asarray(u_tilde, dtype=float)
    bc = BoundaryData(periodic=periodic)
    pot = DissipationPotential.one_d(nu)
    g, h = _face_gradients(u - ut, grid, bc, 0.0)
    gu, _ = _face_gradients(u, grid, bc, 0.0)
    gt = gu - g
    S = pot.gradient(gu[:, None, None])[:, 0, 0]
    St = pot.gradient(gt[:, None, None])[:, 0, 0]
    return float(np.sum((S - St) * g * h)), float(np.sum(g * g * h))
