"""Backward matrix flows and second-moment propagation.

Three backward flows are integrated here: the team-level quadratic flow P
(dense rk4 with per-step symmetrization), and the stacked manager/executive
flows (one explicit backward Euler step per node, matching the per-node
interleaving of the incentive recursion). A forward Lyapunov flow propagates
the closed-loop second moment used by the analytic cost formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvertibilityError, StructureError
from .model import (CentralizedForm, ExecutiveView, ManagerView,
                    ProblemSpec)

COND_CAP = 1e8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid over [0, T] with N steps; node N is the terminal time."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise StructureError("TimeGrid.N", (">= 2",), (self.N,))
        if self.T <= 0:
            raise StructureError("TimeGrid.T", ("> 0",), (self.T,))

    @property
    def dt(self):
        return self.T / self.N

    def nodes(self):
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class RiccatiPath:
    """One matrix value per node plus the condition numbers of monitored
    inversions (nan where no inversion was recorded)."""

    grid: TimeGrid
    values: np.ndarray          # (N+1, r, c)
    cond: np.ndarray = None

    def __post_init__(self):
        if self.cond is None:
            self.cond = np.full(self.grid.N + 1, np.nan)

    def __getitem__(self, k):
        return self.values[k]

    @property
    def max_cond(self):
        finite = self.cond[np.isfinite(self.cond)]
        return float(finite.max()) if finite.size else float("nan")


@dataclass
class SecondMomentPath:
    grid: TimeGrid
    values: np.ndarray          # (N+1, n, n), symmetric PSD


# ---------------------------------------------------------------------------
# generic backward stepper
# ---------------------------------------------------------------------------

def integrate_backward(rhs, terminal, grid: TimeGrid, method="rk4",
                       project=None, node_hook=None) -> RiccatiPath:
    """Integrate dM/dt = rhs(t, M) backward from M(T) = terminal.

    With node-indexed coefficients the caller freezes them at the step's
    right endpoint, so interior rk4 stages see constant coefficients.
    ``project`` (if given) is applied to each accepted node value;
    ``node_hook(k, M)`` can record diagnostics and may raise.
    """
    terminal = np.atleast_2d(np.asarray(terminal))
    N, dt = grid.N, grid.dt
    values = np.empty((N + 1,) + terminal.shape, dtype=terminal.dtype)
    values[N] = terminal if project is None else project(terminal)
    if node_hook is not None:
        node_hook(N, values[N])
    ts = grid.nodes()
    for k in range(N, 0, -1):
        M = values[k]
        h = -dt
        with np.errstate(over="ignore", invalid="ignore"):
            if method == "rk4":
                k1 = rhs(ts[k], M)
                k2 = rhs(ts[k] - 0.5 * dt, M + 0.5 * h * k1)
                k3 = rhs(ts[k] - 0.5 * dt, M + 0.5 * h * k2)
                k4 = rhs(ts[k] - dt, M + h * k3)
                nxt = M + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            elif method == "explicit-euler":
                nxt = M + h * rhs(ts[k], M)
            else:
                raise ValueError(f"unknown method {method!r}")
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(k - 1, "backward flow")
        if project is not None:
            nxt = project(nxt)
        values[k - 1] = nxt
        if node_hook is not None:
            node_hook(k - 1, nxt)
    return RiccatiPath(grid=grid, values=values)


# ---------------------------------------------------------------------------
# team-level flow
# ---------------------------------------------------------------------------

def p_flow_rhs(spec: ProblemSpec, central: CentralizedForm):
    """Right-hand side dP/dt of the team-level flow, as a callable (t, P)."""
    Rc_inv_Bt = np.linalg.solve(central.Rc, central.Bc.T)
    Rc_inv_Dt = np.linalg.solve(central.Rc, central.Dc.T)
    BRB = central.Bc @ Rc_inv_Bt
    DRD = central.Dc @ Rc_inv_Dt
    DRB = central.Dc @ Rc_inv_Bt
    EEt = spec.E @ spec.E.T
    g2 = spec.gamma ** -2
    n = spec.dims.n
    I = np.eye(n)

    def rhs(t, P):
        cterm = spec.C - DRB @ P
        F = (P @ spec.A + spec.A.T @ P - P @ (BRB - g2 * EEt) @ P + spec.Q1
             + cterm.T @ np.linalg.solve(I + P @ DRD, P @ cterm))
        return -F

    return rhs


def solve_P(spec: ProblemSpec, central: CentralizedForm, grid: TimeGrid,
            method="rk4", cond_cap=COND_CAP) -> RiccatiPath:
    """Backward rk4 of the team flow from the terminal weight, symmetrizing
    each node and recording the condition number of the inverted factor."""
    Rc_inv_Dt = np.linalg.solve(central.Rc, central.Dc.T)
    DRD = central.Dc @ Rc_inv_Dt
    I = np.eye(spec.dims.n)
    conds = np.full(grid.N + 1, np.nan)

    def hook(k, P):
        c = float(np.linalg.cond(I + P @ DRD))
        conds[k] = c
        if c > cond_cap:
            raise InvertibilityError(k, "I + P Dc Rc^-1 Dc^T", c, cond_cap)

    path = integrate_backward(p_flow_rhs(spec, central), spec.G1, grid,
                              method=method,
                              project=lambda M: (M + M.T) / 2,
                              node_hook=hook)
    path.cond = conds
    return path


# ---------------------------------------------------------------------------
# stacked manager flow (one explicit backward Euler step per node)
# ---------------------------------------------------------------------------

def _stacked_pieces(forms):
    """Per-block contractions B R^-1 {S^T, B^T, D^T} shared by both stacked
    flows; ``forms`` is a list of (B, D, S, R, Q) tuples."""
    out = []
    for B, D, S, R, Q in forms:
        RinvS = np.linalg.solve(R, S.T)
        RinvB = np.linalg.solve(R, B.T)
        RinvD = np.linalg.solve(R, D.T)
        out.append(dict(
            BRS=B @ RinvS, DRS=D @ RinvS,
            BRB=B @ RinvB, BRD=B @ RinvD,
            DRB=D @ RinvB, DRD=D @ RinvD,
            Q=Q - S @ RinvS,
        ))
    return out


def _extract_closure(pieces, shared_C, stacked, cond_cap, node, factor_name):
    """Solve (I - stacked D2) Z = stacked(C - sum DRS + D1 stacked) for the
    martingale gain of the stacked flow."""
    m = len(pieces)
    n = shared_C.shape[0]
    # stacked is (m*n, n); build (I - stacked @ D2row) with D2row n x (m*n)
    D2row = np.hstack([-p["DRD"] for p in pieces])
    D1row = np.hstack([-p["DRB"] for p in pieces])
    lhs = np.eye(m * n) - stacked @ D2row
    c = float(np.linalg.cond(lhs))
    if c > cond_cap:
        raise InvertibilityError(node, factor_name, c, cond_cap)
    rhs = stacked @ (shared_C - sum(p["DRS"] for p in pieces)) + stacked @ D1row @ stacked
    return np.linalg.solve(lhs, rhs), c


def _stacked_expr(pieces, shared_A, shared_C, stacked, Z):
    """The bracketed expression of a stacked flow (equal to -dM/dt)."""
    n = shared_A.shape[0]
    B1row = np.hstack([-p["BRB"] for p in pieces])
    B2row = np.hstack([-p["BRD"] for p in pieces])
    # block-diagonal A^T (resp. C^T) acting block-row-wise on the stack
    At_stacked = np.vstack([(shared_A - p["BRS"]).T @ stacked[b * n:(b + 1) * n]
                            for b, p in enumerate(pieces)])
    Ct_Z = np.vstack([(shared_C - p["DRS"]).T @ Z[b * n:(b + 1) * n]
                      for b, p in enumerate(pieces)])
    Qstack = np.vstack([p["Q"] for p in pieces])
    return (stacked @ (shared_A - sum(p["BRS"] for p in pieces))
            + stacked @ (B1row @ stacked)
            + At_stacked + Qstack
            + Ct_Z + stacked @ (B2row @ Z))


def _stacked_step(pieces, shared_A, shared_C, stacked, dt, cond_cap, node, factor_name):
    """One explicit backward Euler step of a stacked flow; returns the left
    value and the martingale gain extracted at the right node."""
    Z, c = _extract_closure(pieces, shared_C, stacked, cond_cap, node, factor_name)
    left = stacked + dt * _stacked_expr(pieces, shared_A, shared_C, stacked, Z)
    if not np.all(np.isfinite(left)):
        raise DivergenceError(node, "stacked flow")
    return left, Z, c


def _manager_pieces(view: ManagerView):
    return _stacked_pieces([(f.Bbar, f.Dbar, f.S2i, f.Rci, f.Qbar)
                            for f in view.forms])


def _executive_pieces(view: ExecutiveView):
    return _stacked_pieces([(f.Bhat, f.Dhat, f.S3j, f.R3j, f.Qhat)
                            for f in view.forms])


def step_Pi(view: ManagerView, Pi_right: np.ndarray, dt: float,
            cond_cap=COND_CAP, node=0):
    """Step the stacked manager flow one node to the left using coefficients
    frozen at the right node; also returns the right-node martingale gain."""
    pieces = _manager_pieces(view)
    left, Sigma, cond = _stacked_step(pieces, view.Abar, view.Cbar, Pi_right,
                                      dt, cond_cap, node, "I - Pi D2")
    return left, Sigma, cond


def extract_Sigma(view: ManagerView, Pi: np.ndarray, cond_cap=COND_CAP, node=0):
    """Martingale gain of the manager flow for a given stacked value."""
    pieces = _manager_pieces(view)
    Z, _ = _extract_closure(pieces, view.Cbar, Pi, cond_cap, node, "I - Pi D2")
    return Z


def step_Phi(view: ExecutiveView, Phi_right: np.ndarray, dt: float,
             cond_cap=COND_CAP, node=0):
    """Executive analogue of :func:`step_Pi` (three stacked blocks)."""
    pieces = _executive_pieces(view)
    left, Psi, cond = _stacked_step(pieces, view.Ahat, view.Chat, Phi_right,
                                    dt, cond_cap, node, "I - Phi D2")
    return left, Psi, cond


def extract_Psi(view: ExecutiveView, Phi: np.ndarray, cond_cap=COND_CAP, node=0):
    pieces = _executive_pieces(view)
    Z, _ = _extract_closure(pieces, view.Chat, Phi, cond_cap, node, "I - Phi D2")
    return Z


def manager_flow_rhs(view: ManagerView, Pi: np.ndarray, cond_cap=COND_CAP):
    """dPi/dt of the continuous stacked manager flow with a self-consistent
    martingale gain (used by residual certification)."""
    pieces = _manager_pieces(view)
    Z, _ = _extract_closure(pieces, view.Cbar, Pi, cond_cap, 0, "I - Pi D2")
    return -_stacked_expr(pieces, view.Abar, view.Cbar, Pi, Z)


def executive_flow_rhs(view: ExecutiveView, Phi: np.ndarray, cond_cap=COND_CAP):
    pieces = _executive_pieces(view)
    Z, _ = _extract_closure(pieces, view.Chat, Phi, cond_cap, 0, "I - Phi D2")
    return -_stacked_expr(pieces, view.Ahat, view.Chat, Phi, Z)


def follower_bundle_gains(view, stacked, Z):
    """Best-response bundle gains R^-1 (S^T + B^T block + D^T Z block) for
    each block of a stacked flow (u = -K x convention)."""
    n = stacked.shape[1]
    if isinstance(view, ManagerView):
        forms = [(f.Bbar, f.Dbar, f.S2i, f.Rci) for f in view.forms]
    else:
        forms = [(f.Bhat, f.Dhat, f.S3j, f.R3j) for f in view.forms]
    gains = []
    for b, (B, D, S, R) in enumerate(forms):
        blk = slice(b * n, (b + 1) * n)
        gains.append(np.linalg.solve(R, S.T + B.T @ stacked[blk] + D.T @ Z[blk]))
    return gains


# ---------------------------------------------------------------------------
# second moment of the closed loop
# ---------------------------------------------------------------------------

def second_moment(a_path, b_path, x0, grid: TimeGrid) -> SecondMomentPath:
    """Forward rk4 of dX/dt = aX + Xa^T + bXb^T from X(0) = x0 x0^T.

    ``a_path``/``b_path`` hold one matrix per node; interior rk4 stages use
    the average of the step's endpoint coefficients. Each node value is
    symmetrized.
    """
    x0 = np.asarray(x0, float).reshape(-1)
    N, dt = grid.N, grid.dt
    n = x0.shape[0]
    X = np.empty((N + 1, n, n))
    X[0] = np.outer(x0, x0)

    def f(x, a, b):
        return a @ x + x @ a.T + b @ x @ b.T

    for k in range(N):
        aL, aR = a_path[k], a_path[k + 1]
        bL, bR = b_path[k], b_path[k + 1]
        am, bm = (aL + aR) / 2, (bL + bR) / 2
        x = X[k]
        k1 = f(x, aL, bL)
        k2 = f(x + 0.5 * dt * k1, am, bm)
        k3 = f(x + 0.5 * dt * k2, am, bm)
        k4 = f(x + dt * k3, aR, bR)
        nxt = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(k + 1, "second-moment flow")
        X[k + 1] = (nxt + nxt.T) / 2
    return SecondMomentPath(grid=grid, values=X)
