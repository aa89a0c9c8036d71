"""Scenario presets shared by the command line runner and the test suite."""

from dataclasses import dataclass
import math
from typing import Callable, Optional

import numpy as np

from .constitutive import PressureLaw
from .errors import ConfigError
from .relenergy import ReferencePair
from .solver1d import BoundaryData, FluidState1D, Grid1D, run, stable_dt
from .transport import DensityProfile, VelocityFieldSpec, equilibrium_profile

__all__ = [
    "SCENARIOS",
    "Case",
    "build_case",
    "fixed_step_count",
    "weak_strong_run",
    "characteristics_reference",
    "auto_epsilons",
    "static_reference",
]

SCENARIOS = (
    "rest",
    "viscous-relaxation",
    "smooth-pulse",
    "equilibrium",
    "compact",
    "polynomial-decay",
    "inflow-channel",
)


@dataclass
class Case:
    name: str
    grid: Grid1D
    law: PressureLaw
    nu: float
    bc: BoundaryData
    rho0: Callable
    u0: Callable
    t_end: float
    ref_velocity: Optional[VelocityFieldSpec] = None

    def initial_state(self, grid=None):
        return FluidState1D.from_functions(grid or self.grid, self.rho0, self.u0)


def build_case(name, a=1.0, gamma=1.5, nu=0.1, x_min=0.0, x_max=1.0, n_cells=50, t_end=0.5, alpha=3.0):
    """Initial data, walls and parameters of a named scenario."""
    if name not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {name!r}")
    law = PressureLaw(a, gamma)
    grid = Grid1D(x_min, x_max, n_cells)
    L = grid.length
    mid = 0.5 * (x_min + x_max)
    s = lambda x: (x - x_min) / L
    walls = BoundaryData()
    shifted_sine = lambda x: 0.5 * np.sin(np.pi * s(x))
    if name == "rest":
        return Case(name, grid, law, nu, walls, lambda x: 1.0 + 0.0 * x, lambda x: 0.0 * x, t_end)
    if name == "viscous-relaxation":
        return Case(name, grid, law, nu, walls, lambda x: 1.0 + 0.0 * x, shifted_sine, t_end)
    if name == "smooth-pulse":
        rho0 = lambda x: 1.0 + 0.5 * np.exp(-40.0 * ((x - mid) / L) ** 2)
        return Case(name, grid, law, nu, walls, rho0, shifted_sine, t_end)
    if name == "equilibrium":
        # potential force G = -c (x - mid)^2 / R^2 with c = P'(1): rho0^(gamma-1) = (1 - ((x-mid)/R)^2)_+
        R = 0.25 * L
        c = float(law.dP(1.0))
        prof = equilibrium_profile(lambda x: -c * ((x - mid) / R) ** 2, law, c)
        u0 = lambda x: 0.3 * np.sin(2.0 * np.pi * s(x))
        return Case(name, grid, law, nu, walls, prof, u0, t_end)
    if name == "compact":
        prof = DensityProfile.compact_power(gamma, radius=0.25 * L)
        u0 = lambda x: 0.3 * np.sin(2.0 * np.pi * s(x))
        return Case(name, grid, law, nu, walls, lambda x: prof(x - mid), u0, t_end)
    if name == "polynomial-decay":
        prof = DensityProfile.polynomial_decay(alpha, gamma)
        scale = 0.05 * L
        return Case(name, grid, law, nu, walls, lambda x: prof((x - mid) / scale), shifted_sine, t_end)
    # inflow channel: uniform inflow from the left, outflow on the right
    bc = BoundaryData(u_left=0.5, u_right=0.5, rho_left=1.0)
    rho0 = lambda x: 1.0 + 0.2 * np.sin(np.pi * s(x)) ** 2
    return Case(name, grid, law, nu, bc, rho0, lambda x: 0.5 + 0.0 * x, t_end)


def fixed_step_count(case, grid=None, cfl=0.4, safety=0.5):
    """Number of equal steps covering ``t_end`` at ``safety`` times the initial CFL step."""
    state = case.initial_state(grid)
    dt = safety * stable_dt(state, case.bc, case.law, cfl)
    return max(1, math.ceil(case.t_end / dt - 1e-9))


def _restricted_state(ref, grid):
    rho = ref.rho(0.0, grid.centers)
    u = ref.u(0.0, grid.centers)
    state = FluidState1D(grid, rho, rho * u)
    state.vel = u.copy()
    return state


def weak_strong_run(case, n_cells, n_steps, factor=4, perturbation=0.0, save_every=1):
    """Coarse run against a ``factor``-times finer reference run.

    The coarse initial data is the restriction of the fine initial data, so
    the relative energy starts at zero unless ``perturbation`` adds
    ``perturbation * sin(2 pi s)`` to the coarse initial velocity.
    Returns ``(trajectory, ledger, reference)``.
    """
    coarse = Grid1D(case.grid.x_min, case.grid.x_max, n_cells)
    fine = coarse.refine(factor)
    fine_traj, _ = run(case.initial_state(fine), case.bc, case.law, case.nu, case.t_end,
                       n_steps=factor * n_steps, save_every=factor * save_every)
    ref = ReferencePair.from_fine_run(fine_traj, coarse)
    state = _restricted_state(ref, coarse)
    if perturbation:
        s = (coarse.centers - coarse.x_min) / coarse.length
        du = perturbation * np.sin(2.0 * np.pi * s)
        state = FluidState1D(coarse, state.rho, state.rho * (state.u + du))
        state.vel = state.u.copy()
    traj, ledger = run(state, case.bc, case.law, case.nu, case.t_end, n_steps=n_steps, save_every=save_every)
    return traj, ledger, ref


def characteristics_reference(case, dt=1e-2):
    """Pair built by transporting ``rho0`` with the wall-compatible sine velocity."""
    spec = case.ref_velocity or VelocityFieldSpec.sine(0.5, case.grid.length)
    x0 = case.grid.x_min
    shifted = VelocityFieldSpec.from_1d(
        lambda t, x: spec.u1(t, x - x0),
        lambda t, x: spec.ux1(t, x - x0),
        domain=None,
        name="sine",
    )
    rho0 = DensityProfile(lambda x: case.rho0(np.asarray(x, dtype=float)))
    return ReferencePair.from_characteristics(rho0, shifted, dt=dt), shifted


def static_reference(grid, rho):
    """Time-independent reference at rest with the given cell densities."""
    rho = np.asarray(rho, dtype=float).copy()
    x = grid.centers
    zero = lambda t, y: 0.0 * np.asarray(y, dtype=float)
    return ReferencePair.from_functions(
        lambda t, y: np.interp(y, x, rho), zero, zero, zero, zero, zero,
        regularity={"provenance": "analytic", "note": "static profile at rest"},
    )


def auto_epsilons(rho_ref, n=5):
    """Geometric epsilon ladder starting two decades below the smallest positive reference density."""
    pos = np.asarray(rho_ref)[np.asarray(rho_ref) > 0]
    top = float(pos.min()) if pos.size else 1.0
    return top * 10.0 ** (-2.0 - np.arange(n))
