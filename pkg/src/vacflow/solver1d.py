"""One-dimensional finite-volume solver for barotropic viscous flow.

Each step is split in two:

* an explicit local Lax-Friedrichs update of ``(rho, rho u)`` with the
  pressure inside the convective flux;
* an implicit viscous update ``rho* u - dt d_x(nu d_x u) = m*`` with the
  boundary velocity imposed at the walls.

The implicit viscous solve keeps the velocity defined even in vacuum cells,
so the only time-step restriction is the hyperbolic one.  Every step also
books the terms of the discrete energy balance in an :class:`EnergyLedger`.
"""

from dataclasses import dataclass, field
import csv
import math
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

from .constitutive import DissipationPotential, PressureLaw
from .errors import CFLError, DomainError, MissingBoundaryData, PositivityError

__all__ = [
    "VACUUM_FLOOR",
    "Grid1D",
    "FluidState1D",
    "BoundaryData",
    "EnergyLedger",
    "Trajectory",
    "stable_dt",
    "step",
    "run",
    "discrete_energy",
    "energy_inequality_residual",
    "weak_form_residual_continuity",
    "weak_form_residual_momentum",
    "transport_run",
    "write_trajectory_csv",
]

VACUUM_FLOOR = 1e-14
DEFAULT_CFL = 0.4


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 4:
            raise DomainError("a grid needs at least 4 cells")
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def centers(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self):
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def cell_average(self, fn):
        """Three-point Gauss average of ``fn`` over every cell."""
        c = self.centers
        g = 0.5 * self.dx * math.sqrt(0.6)
        return (5.0 * fn(c - g) + 8.0 * fn(c) + 5.0 * fn(c + g)) / 18.0

    def refine(self, factor=2):
        return Grid1D(self.x_min, self.x_max, self.n_cells * factor)


def _const_or_call(v, t):
    return float(v(t)) if callable(v) else float(v)


@dataclass
class BoundaryData:
    """Wall velocities, inflow densities, or a periodic domain.

    The left wall is an inflow boundary when ``u_left > 0`` and the right
    wall when ``u_right < 0``; the corresponding density must then be given
    and positive.  Values may be constants or callables of time.
    """

    u_left: object = 0.0
    u_right: object = 0.0
    rho_left: object = None
    rho_right: object = None
    periodic: bool = False

    def velocities(self, t):
        if self.periodic:
            return 0.0, 0.0
        return _const_or_call(self.u_left, t), _const_or_call(self.u_right, t)

    def inflow(self, t):
        uL, uR = self.velocities(t)
        return (not self.periodic and uL > 0.0), (not self.periodic and uR < 0.0)

    def inflow_density(self, side, t):
        value = self.rho_left if side == "left" else self.rho_right
        if value is None:
            raise MissingBoundaryData(f"{side} wall is an inflow boundary but no density is given")
        rho = _const_or_call(value, t)
        if not rho > 0:
            raise DomainError(f"inflow density on the {side} wall must be positive")
        return rho

    def lift(self, grid, t, x=None):
        """Affine extension of the wall velocities, evaluated at ``x`` (cell centres by default)."""
        x = grid.centers if x is None else np.asarray(x, dtype=float)
        uL, uR = self.velocities(t)
        return uL + (uR - uL) * (x - grid.x_min) / grid.length

    def lift_slope(self, grid, t):
        uL, uR = self.velocities(t)
        return (uR - uL) / grid.length


@dataclass
class FluidState1D:
    """Cell averages of density and momentum.

    ``vel`` holds the velocity returned by the implicit viscous solve; it is
    defined in vacuum cells too and is what the viscous stress is built from.
    """

    grid: Grid1D
    rho: np.ndarray
    mom: np.ndarray
    t: float = 0.0
    vel: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.mom = np.asarray(self.mom, dtype=float)
        if self.rho.shape != (self.grid.n_cells,) or self.mom.shape != self.rho.shape:
            raise DomainError("state arrays must have one entry per cell")
        if np.any(self.rho < 0):
            raise PositivityError("negative density in state")
        vac = self.vacuum_mask
        self.mom = np.where(vac, 0.0, self.mom)
        if self.vel is None:
            self.vel = self.u.copy()

    @property
    def vacuum_mask(self):
        top = self.rho.max() if self.rho.size else 0.0
        return self.rho <= VACUUM_FLOOR * top

    @property
    def u(self):
        """Velocity ``mom/rho``, set to zero below the relative vacuum floor."""
        vac = self.vacuum_mask
        safe = np.where(vac, 1.0, self.rho)
        return np.where(vac, 0.0, self.mom / safe)

    @classmethod
    def from_functions(cls, grid, rho_fn, u_fn=None, t=0.0):
        rho = grid.cell_average(lambda x: np.asarray(rho_fn(x), dtype=float) + 0.0 * x)
        rho = np.maximum(rho, 0.0)
        if u_fn is None:
            return cls(grid, rho, np.zeros_like(rho), t)
        mom = grid.cell_average(lambda x: (np.asarray(rho_fn(x)) * np.asarray(u_fn(x))) + 0.0 * x)
        u = grid.cell_average(lambda x: np.asarray(u_fn(x), dtype=float) + 0.0 * x)
        state = cls(grid, rho, mom, t)
        state.vel = np.where(state.vacuum_mask, u, state.u)
        return state

    @property
    def mass(self):
        return float(self.rho.sum() * self.grid.dx)

    def copy(self):
        return FluidState1D(self.grid, self.rho.copy(), self.mom.copy(), self.t, self.vel.copy())


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping; cumulative series indexed by step number.

    ``defect[n]`` is right-hand side minus left-hand side of the discrete
    energy inequality on ``[0, times[n]]``.  ``cell_defect`` splits the
    final value over the cells; ``cell_defect_history`` holds the same
    split at every stored snapshot.
    """

    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    mass_inflow: list = field(default_factory=list)
    boundary_energy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    work: list = field(default_factory=list)
    defect: list = field(default_factory=list)
    cell_defect: Optional[np.ndarray] = None
    cell_defect_history: list = field(default_factory=list)
    dx: float = 1.0

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in
                ("times", "energy", "mass", "mass_inflow", "boundary_energy",
                 "dissipation", "work", "defect")}


@dataclass
class Trajectory:
    grid: Grid1D
    bc: BoundaryData
    law: PressureLaw
    nu: float
    times: np.ndarray
    rho: np.ndarray
    mom: np.ndarray
    vel: np.ndarray
    force: Optional[Callable] = None

    def state(self, k):
        return FluidState1D(self.grid, self.rho[k], self.mom[k], float(self.times[k]), self.vel[k])

    def __len__(self):
        return len(self.times)

    @property
    def u(self):
        top = self.rho.max(axis=1, keepdims=True)
        vac = self.rho <= VACUUM_FLOOR * top
        return np.where(vac, 0.0, self.mom / np.where(vac, 1.0, self.rho))


# --------------------------------------------------------------------------
# convective part


def _ghosts(state, bc, law, t):
    rho, u = state.rho, state.u
    if bc.periodic:
        return (rho[-1], u[-1]), (rho[0], u[0])
    uL, uR = bc.velocities(t)
    inL, inR = bc.inflow(t)
    # non-inflow walls mirror the velocity about u_B: the face mass flux is
    # then exactly rho * u_B, and zero at a solid wall
    left = (bc.inflow_density("left", t), uL) if inL else (rho[0], 2.0 * uL - u[0])
    right = (bc.inflow_density("right", t), uR) if inR else (rho[-1], 2.0 * uR - u[-1])
    return left, right


def _llf_fluxes(state, bc, law, t):
    (rl, ul), (rr, ur) = _ghosts(state, bc, law, t)
    rho = np.concatenate([[rl], state.rho, [rr]])
    u = np.concatenate([[ul], state.u, [ur]])
    m = rho * u
    c = law.sound_speed(rho)
    speed = np.abs(u) + c
    a = np.maximum(speed[:-1], speed[1:])
    fm = m * u + law.p(rho)
    F_rho = 0.5 * (m[:-1] + m[1:]) - 0.5 * a * (rho[1:] - rho[:-1])
    F_mom = 0.5 * (fm[:-1] + fm[1:]) - 0.5 * a * (m[1:] - m[:-1])
    if bc.periodic:
        F_rho[0] = F_rho[-1]
        F_mom[0] = F_mom[-1]
    return F_rho, F_mom, a


def stable_dt(state, bc, law, cfl=DEFAULT_CFL, nu=None, explicit_viscous=False):
    """Largest step with ``dt * max face wave speed <= cfl * dx``.

    With ``explicit_viscous`` the parabolic bound ``0.25 dx^2 / nu`` is
    also applied; the implicit viscous solve does not need it.
    """
    _, _, a = _llf_fluxes(state, bc, law, state.t)
    amax = float(a.max())
    dt = cfl * state.grid.dx / amax if amax > 0 else np.inf
    if explicit_viscous and nu:
        dt = min(dt, 0.25 * state.grid.dx**2 / nu)
    return dt


# --------------------------------------------------------------------------
# viscous part


def _viscous_solve(rho, m, grid, bc, nu, dt, t_new):
    n, dx = grid.n_cells, grid.dx
    k = dt * nu / dx**2
    rhs = m.copy()
    if bc.periodic:
        A = diags(
            [rho + 2.0 * k, -k * np.ones(n - 1), -k * np.ones(n - 1), [-k], [-k]],
            [0, 1, -1, n - 1, -(n - 1)],
            format="csc",
        )
        if rho.sum() == 0.0:
            return np.zeros(n)
        return spsolve(A, rhs)
    uL, uR = bc.velocities(t_new)
    diag = rho + 2.0 * k
    diag[0] += k
    diag[-1] += k
    rhs[0] += 2.0 * k * uL
    rhs[-1] += 2.0 * k * uR
    ab = np.zeros((3, n))
    ab[0, 1:] = -k
    ab[1] = diag
    ab[2, :-1] = -k
    return solve_banded((1, 1), ab, rhs)


def _face_gradients(vel, grid, bc, t):
    """Velocity gradient on every face with the face weights of the dissipation sum."""
    dx = grid.dx
    if bc.periodic:
        g = (np.roll(vel, -1) - vel) / dx
        return g, np.full(grid.n_cells, dx)
    uL, uR = bc.velocities(t)
    g = np.concatenate([[(vel[0] - uL) / (0.5 * dx)], np.diff(vel) / dx, [(uR - vel[-1]) / (0.5 * dx)]])
    h = np.full(grid.n_cells + 1, dx)
    h[0] = h[-1] = 0.5 * dx
    return g, h


def _cell_stress(vel, grid, bc, t, nu):
    """Face stresses averaged to cell centres."""
    g, _ = _face_gradients(vel, grid, bc, t)
    if bc.periodic:
        return nu * 0.5 * (g + np.roll(g, 1))
    return nu * 0.5 * (g[:-1] + g[1:])


# --------------------------------------------------------------------------
# energy bookkeeping


def discrete_energy(state, bc, law):
    """``sum [rho |u - u_lift|^2 / 2 + P(rho)] dx`` with the affine lift of the wall velocities."""
    w = state.u - bc.lift(state.grid, state.t)
    return float(np.sum(0.5 * state.rho * w**2 + law.P(state.rho)) * state.grid.dx)


def _cell_energy(state, bc, law, t):
    w = state.u - bc.lift(state.grid, t)
    return (0.5 * state.rho * w**2 + law.P(state.rho)) * state.grid.dx


def _boundary_energy_rates(state, bc, law, t):
    """``P(rho)[u_B.n]^+ + P(rho_B)[u_B.n]^-`` on each wall (energy leaving)."""
    if bc.periodic:
        return 0.0, 0.0
    uL, uR = bc.velocities(t)
    inL, inR = bc.inflow(t)
    unL, unR = -uL, uR
    bL = law.P(bc.inflow_density("left", t)) * unL if inL else law.P(state.rho[0]) * max(unL, 0.0)
    bR = law.P(bc.inflow_density("right", t)) * unR if inR else law.P(state.rho[-1]) * max(unR, 0.0)
    return float(bL), float(bR)


def _convective_work(state, bc, law, t, force):
    """Per-cell lift work of the convective half step, integrated over each cell."""
    grid = state.grid
    k = bc.lift_slope(grid, t)
    lift = bc.lift(grid, t)
    rho, u = state.rho, state.u
    work = (-(rho * u * u + law.p(rho)) * k + rho * u * lift * k) * grid.dx
    if force is not None:
        work = work + rho * force(t, grid.centers) * (u - lift) * grid.dx
    return work


def _viscous_terms(new, bc, t_new, nu):
    """Per-cell dissipation and stress work of the implicit half step."""
    grid = new.grid
    g, h = _face_gradients(new.vel, grid, bc, t_new)
    face_diss = nu * g * g * h
    k = bc.lift_slope(grid, t_new)
    face_work = nu * g * k * h
    cell_diss = np.zeros(grid.n_cells)
    cell_work = np.zeros(grid.n_cells)
    if bc.periodic:
        cell_diss += 0.5 * (face_diss + np.roll(face_diss, 1))
        cell_work += 0.5 * (face_work + np.roll(face_work, 1))
    else:
        for arr, face in ((cell_diss, face_diss), (cell_work, face_work)):
            arr += 0.5 * (face[:-1] + face[1:])
            arr[0] += 0.5 * face[0]
            arr[-1] += 0.5 * face[-1]
    return cell_diss, cell_work


def _interior_energy_flux(state, bc, law, t, nu):
    grid = state.grid
    w = state.u - bc.lift(grid, t)
    S = _cell_stress(state.vel, grid, bc, t, nu)
    e = 0.5 * state.rho * w**2 + law.P(state.rho)
    g = (e + law.p(state.rho)) * state.u - S * w
    if bc.periodic:
        return 0.5 * (g + np.roll(g, -1))  # face i+1/2 for i = 0..n-1
    return 0.5 * (g[:-1] + g[1:])


@dataclass
class _StepBook:
    mass_inflow: float
    boundary_energy: float
    dissipation: float
    work: float
    cell_residual: np.ndarray


def _book(old, new, bc, law, nu, dt, force, F_rho):
    """Discrete energy balance of one step, globally and per cell."""
    t0, t1 = old.t, new.t
    e0 = _cell_energy(old, bc, law, t0)
    e1 = _cell_energy(new, bc, law, t1)
    bL, bR = _boundary_energy_rates(old, bc, law, t0)
    cw = _convective_work(old, bc, law, t0, force)
    cdiss, vwork = _viscous_terms(new, bc, t1, nu)
    H = _interior_energy_flux(old, bc, law, t0, nu)
    if bc.periodic:
        div = H - np.roll(H, 1)
        mass_in = 0.0
    else:
        Hf = np.concatenate([[-bL], H, [bR]])
        div = np.diff(Hf)
        mass_in = float(F_rho[0] - F_rho[-1]) * dt
    res = (e0 - e1) - dt * div - dt * cdiss + dt * (cw + vwork)
    return _StepBook(
        mass_inflow=mass_in,
        boundary_energy=dt * (bL + bR),
        dissipation=dt * float(cdiss.sum()),
        work=dt * float(cw.sum() + vwork.sum()),
        cell_residual=res,
    )


def _advance(state, bc, law, nu, dt, force=None, cfl=DEFAULT_CFL, check_cfl=True):
    if not nu > 0:
        raise DomainError("viscosity nu must be positive")
    if not dt > 0:
        raise DomainError("dt must be positive")
    grid, t = state.grid, state.t
    F_rho, F_mom, a = _llf_fluxes(state, bc, law, t)
    amax = float(a.max())
    if check_cfl and dt * amax > cfl * grid.dx * (1.0 + 1e-10):
        raise CFLError(
            f"dt={dt:.3g} exceeds the CFL bound {cfl * grid.dx / amax:.3g} "
            f"set by the wave speed |u|+c = {amax:.6g}"
        )
    lam = dt / grid.dx
    rho = state.rho - lam * np.diff(F_rho)
    m = state.mom - lam * np.diff(F_mom)
    if force is not None:
        m = m + dt * state.rho * force(t, grid.centers)
    top = max(float(state.rho.max()), float(rho.max()), 1.0e-300)
    if rho.min() < -1e-12 * top:
        raise PositivityError(f"density became negative ({rho.min():.3g}) at t={t:.6g}")
    rho = np.maximum(rho, 0.0)
    vel = _viscous_solve(rho, m, grid, bc, nu, dt, t + dt)
    new = FluidState1D(grid, rho, rho * vel, t + dt, vel)
    return new, F_rho


def step(state, bc, law, nu, dt, force=None, cfl=DEFAULT_CFL):
    """Advance one time step; raises :class:`CFLError` if ``dt`` is too large."""
    return _advance(state, bc, law, nu, dt, force, cfl)[0]


def run(state, bc, law, nu, t_end, dt=None, cfl=DEFAULT_CFL, force=None, n_steps=None, save_every=1):
    """Integrate to ``t_end`` and return ``(trajectory, ledger)``.

    With ``dt`` (or ``n_steps``) the step is fixed to ``t_end / n``;
    otherwise it adapts to the CFL bound and the last step is shortened.
    Snapshots are stored every ``save_every`` steps and at the final time.
    """
    grid = state.grid
    ledger = EnergyLedger(dx=grid.dx)
    cur = state.copy()
    if n_steps is None and dt is not None:
        n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    fixed = t_end / n_steps if n_steps else None
    snaps = [cur]
    cum = dict(mass_inflow=0.0, boundary_energy=0.0, dissipation=0.0, work=0.0)
    cells = np.zeros(grid.n_cells)
    E0 = discrete_energy(cur, bc, law)

    def record(s):
        ledger.times.append(s.t)
        ledger.energy.append(discrete_energy(s, bc, law))
        ledger.mass.append(s.mass)
        for key, val in cum.items():
            getattr(ledger, key).append(val)
        ledger.defect.append(E0 - ledger.energy[-1] - cum["dissipation"] - cum["boundary_energy"] + cum["work"])

    record(cur)
    ledger.cell_defect_history.append(cells.copy())
    k = 0
    while True:
        if fixed is not None:
            if k >= n_steps:
                break
            h = fixed
        else:
            remaining = t_end - cur.t
            if remaining <= 1e-12 * max(1.0, t_end):
                break
            h = min(stable_dt(cur, bc, law, cfl), remaining)
        new, F_rho = _advance(cur, bc, law, nu, h, force, cfl)
        book = _book(cur, new, bc, law, nu, h, force, F_rho)
        for key in cum:
            cum[key] += getattr(book, key)
        cells += book.cell_residual
        cur = new
        k += 1
        record(cur)
        if k % save_every == 0:
            snaps.append(cur)
            ledger.cell_defect_history.append(cells.copy())
    if snaps[-1] is not cur:
        snaps.append(cur)
        ledger.cell_defect_history.append(cells.copy())
    ledger.cell_defect = cells
    traj = Trajectory(
        grid=grid,
        bc=bc,
        law=law,
        nu=nu,
        times=np.array([s.t for s in snaps]),
        rho=np.array([s.rho for s in snaps]),
        mom=np.array([s.mom for s in snaps]),
        vel=np.array([s.vel for s in snaps]),
        force=force,
    )
    return traj, ledger


@dataclass
class DefectSeries:
    times: np.ndarray
    defect: np.ndarray
    negative_part: float
    constant: float


def energy_inequality_residual(traj, ledger, bc, law, pot=None):
    """Recompute the discrete energy inequality defect from the trajectory.

    The trajectory must hold every step.  Dissipation is evaluated through
    the potential as ``F(d_x u) + F*(S)``, which for the 1-D potential
    ``one_d(nu)`` equals ``nu (d_x u)^2``.  Returns the defect series, the
    size of its negative part and ``C = negative_part / (dx + dt)``.
    """
    if pot is None:
        pot = DissipationPotential.one_d(traj.nu)
    if len(traj.times) != len(ledger.times):
        raise DomainError("trajectory must be saved at every step")
    grid = traj.grid
    E0 = discrete_energy(traj.state(0), bc, law)
    defect = [0.0]
    total = 0.0
    for k in range(1, len(traj)):
        old, new = traj.state(k - 1), traj.state(k)
        dt = new.t - old.t
        g, h = _face_gradients(new.vel, grid, bc, new.t)
        D = g[:, None, None]
        S = pot.gradient(D)
        diss = float(np.sum((pot.value(D) + pot.conjugate(S)) * h))
        bL, bR = _boundary_energy_rates(old, bc, law, old.t)
        work = float(np.sum(_convective_work(old, bc, law, old.t, traj.force)))
        work += float(np.sum(S[:, 0, 0] * h)) * bc.lift_slope(grid, new.t)
        total += dt * (work - diss - bL - bR)
        defect.append(E0 - discrete_energy(new, bc, law) + total)
    defect = np.array(defect)
    neg = float(max(0.0, -defect.min()))
    dts = np.diff(traj.times)
    dt = float(dts.max()) if dts.size else 0.0
    return DefectSeries(np.asarray(traj.times), defect, neg, neg / (grid.dx + dt))


# --------------------------------------------------------------------------
# weak-form residuals


def _trapz(values, times):
    values = np.asarray(values)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def _fd_t(phi, t, x, h=1e-6):
    return (phi(t + h, x) - phi(t - h, x)) / (2.0 * h)


def _fd_x(phi, t, x, h=1e-6):
    return (phi(t, x + h) - phi(t, x - h)) / (2.0 * h)


def _as_field(fn, t, x):
    return np.asarray(fn(t, x), dtype=float) + 0.0 * x


def weak_form_residual_continuity(traj, bc, phi, phi_t=None, phi_x=None):
    """Imbalance of the weak continuity equation with test function ``phi(t, x)``.

    Boundary fluxes use the wall-adjacent density on outflow walls and the
    prescribed density on inflow walls.  Time integrals use the trapezoid
    rule over the stored snapshots; missing derivatives are taken by
    centred differences.
    """
    grid = traj.grid
    x, dx = grid.centers, grid.dx
    phi_t = phi_t or (lambda t, y: _fd_t(phi, t, y))
    phi_x = phi_x or (lambda t, y: _fd_x(phi, t, y))
    u = traj.u
    bulk, bdry = [], []
    for k, t in enumerate(traj.times):
        rho = traj.rho[k]
        bulk.append(np.sum(rho * _as_field(phi_t, t, x) + rho * u[k] * _as_field(phi_x, t, x)) * dx)
        if bc.periodic:
            bdry.append(0.0)
            continue
        uL, uR = bc.velocities(t)
        inL, inR = bc.inflow(t)
        rL = bc.inflow_density("left", t) if inL else rho[0]
        rR = bc.inflow_density("right", t) if inR else rho[-1]
        pL = float(_as_field(phi, t, np.array([grid.x_min]))[0])
        pR = float(_as_field(phi, t, np.array([grid.x_max]))[0])
        bdry.append(pL * rL * (-uL) + pR * rR * uR)
    T = traj.times
    start = np.sum(traj.rho[0] * _as_field(phi, T[0], x)) * dx
    end = np.sum(traj.rho[-1] * _as_field(phi, T[-1], x)) * dx
    return float(end - start + _trapz(bdry, T) - _trapz(bulk, T))


def weak_form_residual_momentum(traj, bc, law, pot, phi, phi_t=None, phi_x=None, defect=None):
    """Imbalance of the weak momentum equation for ``phi`` vanishing on the walls.

    ``defect`` is a cellwise Reynolds defect (shape ``(n_cells,)`` or
    ``(n_times, n_cells)``, zero by default); its contribution
    ``sum phi_x R dx`` enters linearly.
    """
    grid = traj.grid
    x, dx = grid.centers, grid.dx
    phi_t = phi_t or (lambda t, y: _fd_t(phi, t, y))
    phi_x = phi_x or (lambda t, y: _fd_x(phi, t, y))
    if pot is None:
        pot = DissipationPotential.one_d(traj.nu)
    faces = grid.faces if not bc.periodic else grid.faces[1:]
    u = traj.u
    R = None if defect is None else np.asarray(defect, dtype=float)
    integrand = []
    for k, t in enumerate(traj.times):
        rho, m = traj.rho[k], traj.mom[k]
        px = _as_field(phi_x, t, x)
        val = np.sum(m * _as_field(phi_t, t, x) + (m * u[k] + law.p(rho)) * px) * dx
        g, h = _face_gradients(traj.vel[k], grid, bc, t)
        S = pot.gradient(g[:, None, None])[:, 0, 0]
        val -= np.sum(S * _as_field(phi_x, t, faces) * h)
        if traj.force is not None:
            val += np.sum(rho * traj.force(t, x) * _as_field(phi, t, x)) * dx
        if R is not None:
            Rk = R if R.ndim == 1 else R[k]
            val += np.sum(px * Rk) * dx
        integrand.append(val)
    T = traj.times
    start = np.sum(traj.mom[0] * _as_field(phi, T[0], x)) * dx
    end = np.sum(traj.mom[-1] * _as_field(phi, T[-1], x)) * dx
    return float(end - start - _trapz(integrand, T))


# --------------------------------------------------------------------------
# pure transport with a prescribed velocity


def transport_run(rho0, grid, spec, t_end, cfl=DEFAULT_CFL, rho_inflow=None):
    """Upwind finite-volume solution of ``rho_t + (rho u)_x = 0`` for a given velocity field.

    ``rho0`` is a callable (cell-averaged by Gauss quadrature) or an array of
    cell values; ``spec`` supplies ``u1(t, x)``.  The step is fixed from the
    face velocities at ``t = 0``.  Returns the final cell densities.
    """
    rho = grid.cell_average(rho0) if callable(rho0) else np.asarray(rho0, dtype=float).copy()
    faces = grid.faces
    umax = float(np.max(np.abs(spec.u1(0.0, faces)))) or 1.0
    n = max(1, math.ceil(t_end * umax / (cfl * grid.dx) - 1e-9))
    dt = t_end / n
    for k in range(n):
        t = k * dt
        uf = spec.u1(t, faces)
        left = np.concatenate([[rho[0]], rho])
        right = np.concatenate([rho, [rho[-1]]])
        F = np.where(uf >= 0, uf * left, uf * right)
        if uf[0] > 0:
            if rho_inflow is None:
                raise MissingBoundaryData("inflow at the left end needs rho_inflow")
            F[0] = uf[0] * rho_inflow(t)
        if uf[-1] < 0:
            if rho_inflow is None:
                raise MissingBoundaryData("inflow at the right end needs rho_inflow")
            F[-1] = uf[-1] * rho_inflow(t)
        rho = rho - dt / grid.dx * np.diff(F)
    return rho


def write_trajectory_csv(traj, path, every=1):
    """Rows ``t, x_center, rho, u`` for every ``every``-th snapshot."""
    x = traj.grid.centers
    u = traj.u
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x_center", "rho", "u"])
        for k in range(0, len(traj.times), every):
            for i in range(len(x)):
                w.writerow([f"{traj.times[k]:.17g}", f"{x[i]:.17g}", f"{traj.rho[k, i]:.17g}", f"{u[k, i]:.17g}"])
