"""Team-optimal synthesis: feedback gains, worst-case disturbance, and the
analytic optimal cost values implied by the solved backward flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvertibilityError, StructureError
from .model import (CentralizedForm, ComponentGains, N_EXECUTIVES,
                    ProblemSpec, component_gains)
from .riccati import COND_CAP, RiccatiPath, SecondMomentPath


def compute_Lambda(P, central: CentralizedForm, spec: ProblemSpec,
                   cond_cap=COND_CAP, node=0):
    """Martingale gain (I + P Dc Rc^-1 Dc^T)^-1 P (C - Dc Rc^-1 Bc^T P)."""
    Rc_inv_Bt = np.linalg.solve(central.Rc, central.Bc.T)
    Rc_inv_Dt = np.linalg.solve(central.Rc, central.Dc.T)
    lhs = np.eye(spec.dims.n) + P @ (central.Dc @ Rc_inv_Dt)
    c = float(np.linalg.cond(lhs))
    if c > cond_cap:
        raise InvertibilityError(node, "I + P Dc Rc^-1 Dc^T", c, cond_cap)
    return np.linalg.solve(lhs, P @ (spec.C - central.Dc @ Rc_inv_Bt @ P))


@dataclass
class TeamSolution:
    """Per-node team-optimal data. Conventions: u_c = -Kc x, v = Kv x,
    closed loop dx = a x dt + b x dW."""

    spec: ProblemSpec
    central: CentralizedForm
    P: RiccatiPath
    Lambda: np.ndarray          # (N+1, n, n)
    Kc: np.ndarray              # (N+1, mc, n)
    Kv: np.ndarray              # (N+1, n_v, n)
    a: np.ndarray               # (N+1, n, n)
    b: np.ndarray               # (N+1, n, n)

    @property
    def grid(self):
        return self.P.grid

    def gains_at(self, k) -> ComponentGains:
        return component_gains(self.spec, self.P[k], self.Lambda[k])

    def component_gain(self, level, i, j=None):
        """Slice of Kc for one channel, shape (N+1, width, n)."""
        blk = self.central.block(level, i, j)
        return self.Kc[:, blk.sl, :]

    def manager_bundle_gain(self, i):
        """Gain of manager i's bundle R_{1i}^-1 (B_i^T P + D_i^T Lam),
        assembled from the per-channel slices."""
        parts = [self.component_gain(2, i, j) for j in range(N_EXECUTIVES)]
        parts += [self.component_gain(3, i, j) for j in range(N_EXECUTIVES)]
        return np.concatenate(parts, axis=1)


def team_gains(P: RiccatiPath, spec: ProblemSpec, central: CentralizedForm,
               cond_cap=COND_CAP) -> TeamSolution:
    """All node-wise gains and closed-loop coefficients from a solved P."""
    grid = P.grid
    n, mc, n_v = spec.dims.n, central.mc, spec.dims.n_v
    g2 = spec.gamma ** -2
    Rc_inv_Bt = np.linalg.solve(central.Rc, central.Bc.T)
    Rc_inv_Dt = np.linalg.solve(central.Rc, central.Dc.T)
    BRB = central.Bc @ Rc_inv_Bt
    EEt = spec.E @ spec.E.T

    Lam = np.empty((grid.N + 1, n, n))
    Kc = np.empty((grid.N + 1, mc, n))
    Kv = np.empty((grid.N + 1, n_v, n))
    a = np.empty((grid.N + 1, n, n))
    b = np.empty((grid.N + 1, n, n))
    for k in range(grid.N + 1):
        Pk = P[k]
        Lam[k] = compute_Lambda(Pk, central, spec, cond_cap=cond_cap, node=k)
        Kc[k] = np.linalg.solve(central.Rc, central.Bc.T @ Pk + central.Dc.T @ Lam[k])
        Kv[k] = g2 * spec.E.T @ Pk
        a[k] = spec.A - central.Bc @ Kc[k] + g2 * EEt @ Pk
        b[k] = spec.C - central.Dc @ Kc[k]
    return TeamSolution(spec=spec, central=central, P=P, Lambda=Lam,
                        Kc=Kc, Kv=Kv, a=a, b=b)


@dataclass
class AnalyticCosts:
    J1_star: float
    Jv_star: float
    y0: np.ndarray


def analytic_costs(team: TeamSolution, X: SecondMomentPath,
                   spec: ProblemSpec) -> AnalyticCosts:
    """Optimal cost values of the joint minimization and of the disturbance
    functional: J1* = x0^T P(0) x0 + gamma^-2 int tr(E^T P X P E) dt
    (trapezoid on the grid), Jv* = -x0^T P(0) x0."""
    if X.grid != team.grid:
        raise StructureError("second-moment grid", (team.grid.N,), (X.grid.N,))
    P0 = team.P[0]
    x0 = spec.x0
    quad = float(x0 @ P0 @ x0)
    integrand = np.array([
        np.trace(spec.E.T @ team.P[k] @ X.values[k] @ team.P[k] @ spec.E)
        for k in range(team.grid.N + 1)])
    integral = float(np.trapezoid(integrand, dx=team.grid.dt))
    return AnalyticCosts(
        J1_star=quad + spec.gamma ** -2 * integral,
        Jv_star=-quad,
        y0=P0 @ x0,
    )
