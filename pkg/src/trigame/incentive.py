"""Two-layer backward recursion for the incentive parameters.

Each backward sweep interleaves one explicit step of the corresponding
stacked flow with one matching solve per follower block, exactly one solve
per node. Inside a matching solve the stacked value, the martingale gain,
and the announced-rule state coefficient from the previous (right) node are
frozen; the unknowns enter through the substituted input/weight matrices.
The matching equation forces the follower best-response gains to equal the
team-optimal gains (the gain-equality reading; for scalar state with a
nonvanishing trajectory the two readings coincide).

Roots are found by damped Newton on the complexified parameter vector with
a central-difference Jacobian, warm-started from the right node's
parameters, with extra seeded complex starts. Among all distinct roots
found, the one closest to the warm start is selected (continuity rule).
Parameter storage is complex throughout; real instances simply carry zero
imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MatchingError
from .model import (N_EXECUTIVES, N_MANAGERS, ProblemSpec,
                    assemble_executive_view, assemble_manager_view,
                    component_gains, level1_state_gain, level2_state_gain)
from .riccati import (COND_CAP, TimeGrid, extract_Psi, extract_Sigma,
                      step_Phi, step_Pi)
from .team import TeamSolution

SIGMA_CONVENTION = ("martingale gain for the matching at node k-1 is extracted "
                    "from the freshly stepped stacked value with the right "
                    "node's coefficient matrices")
LAG_CONVENTION = ("the announced-rule state coefficient inside S enters the "
                  "matching frozen at the right node; it is recomputed from "
                  "the solved parameters afterwards")


@dataclass
class SolverConfig:
    """Knobs of the matching solves. ``extra_starts`` seeded complex starts
    are tried besides the warm start; ``perturb_scales`` cycles over them."""

    tol: float = 1e-8
    newton_tol: float = 1e-11
    max_iter: int = 50
    jac_step: float = 1e-6
    extra_starts: int = 6
    perturb_scales: tuple = (1e-3, 0.2, 0.2, 0.5, 0.5, 1.0)
    cond_cap: float = COND_CAP
    seed: int = 0
    jump_cap_factor: float = 10.0


# ---------------------------------------------------------------------------
# damped complex Newton with multi-start root collection
# ---------------------------------------------------------------------------

def _safe_eval(fun, w):
    try:
        r = fun(w)
    except np.linalg.LinAlgError:
        return None, np.inf
    rn = float(np.linalg.norm(r))
    if not np.isfinite(rn):
        return None, np.inf
    return r, rn


def newton_solve(fun, w0, cfg: SolverConfig):
    """Damped Newton for a holomorphic residual map C^k -> C^m.

    Central-difference Jacobian with relative step ``jac_step``; the step is
    halved while the residual does not decrease. Square systems use a direct
    solve, non-square ones a least-squares (Gauss-Newton) step. Returns
    (w, residual_norm, iterations).
    """
    w = np.asarray(w0, dtype=complex).copy()
    r, rn = _safe_eval(fun, w)
    if r is None:
        return w, np.inf, 0
    m, k = r.size, w.size
    for it in range(cfg.max_iter):
        if rn < cfg.newton_tol:
            return w, rn, it
        J = np.empty((m, k), dtype=complex)
        bad = False
        for c in range(k):
            h = cfg.jac_step * max(1.0, abs(w[c]))
            wp = w.copy(); wp[c] += h
            wm = w.copy(); wm[c] -= h
            rp, _ = _safe_eval(fun, wp)
            rm, _ = _safe_eval(fun, wm)
            if rp is None or rm is None:
                bad = True
                break
            J[:, c] = (rp - rm) / (2 * h)
        if bad:
            return w, rn, it
        try:
            if m == k:
                step = np.linalg.solve(J, -r)
            else:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            return w, rn, it
        alpha, accepted = 1.0, False
        for _ in range(50):
            r2, rn2 = _safe_eval(fun, w + alpha * step)
            if r2 is not None and rn2 < rn:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return w, rn, it
        w, r, rn = w + alpha * step, r2, rn2
    return w, rn, cfg.max_iter


def find_roots(fun, warm, cfg: SolverConfig, rng):
    """Collect distinct roots from the warm start plus seeded complex
    perturbations of it. Returns (roots, iters, best_residual) where roots
    and iters are parallel lists. A warm start that is already a root is
    returned alone (the continuity selection would pick it regardless)."""
    starts = [np.asarray(warm, dtype=complex)]
    roots, iters = [], []
    best = np.inf
    w, rn, it = newton_solve(fun, starts[0], cfg)
    if rn < cfg.tol:
        roots.append(w)
        iters.append(it)
        best = rn
        if it == 0:
            return roots, iters, best
    scale = np.maximum(1.0, np.abs(starts[0]))
    for s in range(cfg.extra_starts):
        eps = cfg.perturb_scales[s % len(cfg.perturb_scales)]
        noise = rng.standard_normal(starts[0].size) + 1j * rng.standard_normal(starts[0].size)
        w, rn, it = newton_solve(fun, starts[0] + eps * scale * noise, cfg)
        best = min(best, rn)
        if rn < cfg.tol:
            if not any(np.linalg.norm(w - r) < 1e-6 * (1 + np.linalg.norm(r))
                       for r in roots):
                roots.append(w)
                iters.append(it)
    if not roots:
        # rescue: a far warm start can leave every perturbed start stranded
        # behind weight-singular surfaces; retry from neutral points
        for s0 in (np.zeros_like(starts[0]), 0.25 * starts[0]):
            for _ in range(2):
                w, rn, it = newton_solve(fun, s0, cfg)
                best = min(best, rn)
                if rn < cfg.tol:
                    roots.append(w)
                    iters.append(it)
                    break
                noise = rng.standard_normal(s0.size) + 1j * rng.standard_normal(s0.size)
                s0 = s0 + 0.3 * noise
    return roots, iters, best


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------

@dataclass
class MatchingReport:
    """One row per matching solve plus path-level diagnostics."""

    level: int
    rows: list = field(default_factory=list)
    sigma_convention: str = SIGMA_CONVENTION
    lag_convention: str = LAG_CONVENTION
    jump_cap_factor: float = 10.0

    def add(self, node, block, residual, iterations, n_roots, jump, ls_fallback):
        self.rows.append(dict(node=node, block=block, residual=residual,
                              iterations=iterations, n_roots=n_roots,
                              jump=jump, ls_fallback=ls_fallback))

    @property
    def max_residual(self):
        return max((r["residual"] for r in self.rows), default=0.0)

    @property
    def converged(self):
        return bool(self.rows) and all(np.isfinite(r["residual"]) for r in self.rows)

    def flagged_jumps(self):
        """Rows whose parameter jump exceeds the cap (10x median by
        default); flagged, never hidden."""
        jumps = np.array([r["jump"] for r in self.rows])
        if not jumps.size:
            return []
        med = np.median(jumps[jumps > 0]) if np.any(jumps > 0) else 0.0
        cap = self.jump_cap_factor * med
        return [r for r in self.rows if med > 0 and r["jump"] > cap]


@dataclass
class Level1Parameters:
    """Announced-rule parameters of the top level, per node. ``eta[i][j]``
    has shape (N+1, m1[i], m2[i][j]); ``xi[i][j]`` is the per-pair state
    coefficient (reported, computed from its defining identity)."""

    grid: TimeGrid
    eta: list
    zeta: list
    xi: list
    Pi: np.ndarray              # (N+1, 2n, n) complex
    Sigma: np.ndarray           # (N+1, 2n, n) complex
    step_cond: np.ndarray       # (N+1,) condition of the stepped closure

    def at(self, k):
        """(eta, zeta) nested lists at node k."""
        eta = [[self.eta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        zeta = [[self.zeta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        return eta, zeta

    def max_imag(self):
        out = 0.0
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                out = max(out, float(np.max(np.abs(self.eta[i][j].imag))),
                          float(np.max(np.abs(self.zeta[i][j].imag))))
        return out


@dataclass
class Level2Parameters:
    """Managers' announced-rule parameters, per node. ``rho[i][j]`` has
    shape (N+1, m2[i][j], m3[j][i])."""

    grid: TimeGrid
    rho: list
    theta: list
    Phi: np.ndarray
    Psi: np.ndarray
    step_cond: np.ndarray

    def at(self, k):
        theta = [[self.theta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        rho = [[self.rho[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        return theta, rho

    def max_imag(self):
        out = 0.0
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                out = max(out, float(np.max(np.abs(self.rho[i][j].imag))),
                          float(np.max(np.abs(self.theta[i][j].imag))))
        return out


# ---------------------------------------------------------------------------
# level 1
# ---------------------------------------------------------------------------

def _pack_level1(spec, eta_i, zeta_i, i):
    parts = [np.asarray(eta_i[j], complex).ravel() for j in range(N_EXECUTIVES)]
    parts += [np.asarray(zeta_i[j], complex).ravel() for j in range(N_EXECUTIVES)]
    return np.concatenate(parts)


def _unpack_level1(spec, w, i):
    d = spec.dims
    eta, zeta, pos = [], [], 0
    for j in range(N_EXECUTIVES):
        sz = d.m1[i] * d.m2[i][j]
        eta.append(w[pos:pos + sz].reshape(d.m1[i], d.m2[i][j]))
        pos += sz
    for j in range(N_EXECUTIVES):
        sz = d.m1[i] * d.m3[j][i]
        zeta.append(w[pos:pos + sz].reshape(d.m1[i], d.m3[j][i]))
        pos += sz
    return eta, zeta


def matching_residual_level1(spec: ProblemSpec, i, w, P, Lam, Pi_i, Sigma_i,
                             Xi_lag_i, gains=None):
    """Gain-difference of manager i's best response against the team bundle
    gain, flattened; the frozen right-node state coefficient enters S."""
    d = spec.dims
    if gains is None:
        gains = component_gains(spec, P, Lam)
    eta_i, zeta_i = _unpack_level1(spec, np.asarray(w, complex), i)
    H = np.hstack(eta_i + zeta_i)
    Bi = np.hstack([spec.B2[i][j] for j in range(N_EXECUTIVES)]
                   + [spec.B3[j][i] for j in range(N_EXECUTIVES)])
    Di = np.hstack([spec.D2[i][j] for j in range(N_EXECUTIVES)]
                   + [spec.D3[j][i] for j in range(N_EXECUTIVES)])
    base = np.zeros((H.shape[1], H.shape[1]), complex)
    pos = 0
    for blkR in ([spec.R2ij[i][j] for j in range(N_EXECUTIVES)]
                 + [spec.Rbar2[j][i] for j in range(N_EXECUTIVES)]):
        sz = blkR.shape[0]
        base[pos:pos + sz, pos:pos + sz] = blkR
        pos += sz
    Rci = base + H.T @ spec.R2[i] @ H
    S2i = Xi_lag_i.T @ spec.R2[i] @ H
    Bbar = Bi + spec.B1[i] @ H
    Dbar = Di + spec.D1[i] @ H
    Kci = gains.manager_bundle(i)
    bracket = np.linalg.solve(Rci, S2i.T + Bbar.T @ Pi_i + Dbar.T @ Sigma_i) - Kci
    return bracket.ravel()


def solve_matching_level1(spec, i, frozen, guess, cfg: SolverConfig, rng):
    """Solve the node's matching equation for manager block i.

    ``frozen`` carries P, Lam, the stacked block Pi_i, the martingale block
    Sigma_i and the lagged state coefficient Xi_lag_i. Returns the selected
    root (eta_i, zeta_i lists), its residual, iterations, number of distinct
    roots, and whether the system was non-square (least-squares reading).
    """
    gains = component_gains(spec, frozen["P"], frozen["Lam"])

    def fun(w):
        return matching_residual_level1(
            spec, i, w, frozen["P"], frozen["Lam"], frozen["Pi_i"],
            frozen["Sigma_i"], frozen["Xi_lag_i"], gains=gains)

    w0 = _pack_level1(spec, guess[0], guess[1], i)
    ls_fallback = w0.size != spec.dims.manager_bundle_width(i) * spec.dims.n
    roots, iters, best = find_roots(fun, w0, cfg, rng)
    if not roots:
        return None, best, 0, 0, ls_fallback
    dists = [np.linalg.norm(r - w0) for r in roots]
    pick = int(np.argmin(dists))
    w = roots[pick]
    rn = float(np.linalg.norm(fun(w)))
    return _unpack_level1(spec, w, i), rn, iters[pick], len(roots), ls_fallback


def level1_recursion(spec: ProblemSpec, team: TeamSolution, terminal_eta,
                     terminal_zeta, grid: TimeGrid = None,
                     cfg: SolverConfig = None):
    """Backward sweep producing the top level's parameter paths.

    ``terminal_eta[i][j]`` / ``terminal_zeta[i][j]`` are the caller-chosen
    terminal parameter values (never defaulted). Raises MatchingError when a
    node block fails to reach the tolerance.
    """
    cfg = cfg or SolverConfig()
    grid = grid or team.grid
    if grid.N != team.grid.N:
        raise ValueError("recursion grid must match the team solution grid")
    d = spec.dims
    N, dt, n = grid.N, grid.dt, d.n

    eta = [[np.zeros((N + 1, d.m1[i], d.m2[i][j]), complex)
            for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    zeta = [[np.zeros((N + 1, d.m1[i], d.m3[j][i]), complex)
             for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    for i in range(N_MANAGERS):
        for j in range(N_EXECUTIVES):
            eta[i][j][N] = np.asarray(terminal_eta[i][j], complex).reshape(d.m1[i], d.m2[i][j])
            zeta[i][j][N] = np.asarray(terminal_zeta[i][j], complex).reshape(d.m1[i], d.m3[j][i])

    Pi = np.zeros((N + 1, N_MANAGERS * n, n), complex)
    Sigma = np.zeros((N + 1, N_MANAGERS * n, n), complex)
    step_cond = np.full(N + 1, np.nan)
    Pi[N] = np.vstack(spec.G2).astype(complex)
    report = MatchingReport(level=1, jump_cap_factor=cfg.jump_cap_factor)

    for k in range(N, 0, -1):
        eta_k = [[eta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        zeta_k = [[zeta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        view_k = assemble_manager_view(spec, team.P[k], team.Lambda[k], eta_k, zeta_k)
        Pi[k - 1], Sigma[k], step_cond[k] = step_Pi(view_k, Pi[k], dt,
                                                    cond_cap=cfg.cond_cap, node=k)
        sigma_match = extract_Sigma(view_k, Pi[k - 1], cond_cap=cfg.cond_cap, node=k - 1)
        for i in range(N_MANAGERS):
            frozen = dict(P=team.P[k - 1], Lam=team.Lambda[k - 1],
                          Pi_i=Pi[k - 1, i * n:(i + 1) * n],
                          Sigma_i=sigma_match[i * n:(i + 1) * n],
                          Xi_lag_i=view_k.Xi[i])
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, k - 1, i)))
            guess = ([eta[i][j][k] for j in range(N_EXECUTIVES)],
                     [zeta[i][j][k] for j in range(N_EXECUTIVES)])
            sol, rn, iters, n_roots, ls = solve_matching_level1(
                spec, i, frozen, guess, cfg, rng)
            if sol is None or rn > cfg.tol:
                block = f"manager {i}" + (" (least-squares floor)" if ls else "")
                raise MatchingError(k - 1, block, rn, cfg.tol)
            eta_sol, zeta_sol = sol
            jump = float(np.linalg.norm(
                np.concatenate([ (eta_sol[j] - eta[i][j][k]).ravel() for j in range(N_EXECUTIVES)]
                               + [(zeta_sol[j] - zeta[i][j][k]).ravel() for j in range(N_EXECUTIVES)])))
            report.add(k - 1, f"manager {i}", rn, iters, n_roots, jump, ls)
            for j in range(N_EXECUTIVES):
                eta[i][j][k - 1] = eta_sol[j]
                zeta[i][j][k - 1] = zeta_sol[j]

    # closure gain at node 0 from the now-known node-0 parameters
    eta_0 = [[eta[i][j][0] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    zeta_0 = [[zeta[i][j][0] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    view_0 = assemble_manager_view(spec, team.P[0], team.Lambda[0], eta_0, zeta_0)
    Sigma[0] = extract_Sigma(view_0, Pi[0], cond_cap=cfg.cond_cap, node=0)

    xi = [[np.zeros((N + 1, d.m1[i], n), complex) for j in range(N_EXECUTIVES)]
          for i in range(N_MANAGERS)]
    for k in range(N + 1):
        g = team.gains_at(k)
        eta_k = [[eta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        zeta_k = [[zeta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                xi[i][j][k] = level1_state_gain(g, eta_k, zeta_k, i, j)

    params = Level1Parameters(grid=grid, eta=eta, zeta=zeta, xi=xi, Pi=Pi,
                              Sigma=Sigma, step_cond=step_cond)
    return params, report


# ---------------------------------------------------------------------------
# level 2
# ---------------------------------------------------------------------------

def matching_residual_level2(spec: ProblemSpec, i, j, w, P, Lam, Phi_j, Psi_j,
                             theta_lag_ij, eta_ij, zeta_ij, gains=None):
    """Gain-difference of executive j's best response on the channel serving
    manager i against the team gain, flattened; theta is frozen at the right
    node inside the cross weight."""
    d = spec.dims
    if gains is None:
        gains = component_gains(spec, P, Lam)
    rho = np.asarray(w, complex).reshape(d.m2[i][j], d.m3[j][i])
    Bh = (spec.B1[i] @ (np.asarray(eta_ij) @ rho + np.asarray(zeta_ij))
          + spec.B2[i][j] @ rho + spec.B3[j][i])
    Dh = (spec.D1[i] @ (np.asarray(eta_ij) @ rho + np.asarray(zeta_ij))
          + spec.D2[i][j] @ rho + spec.D3[j][i])
    Rblk = spec.Rbar3[j][i] + rho.T @ spec.R3ij[i][j] @ rho
    bracket = (-np.linalg.solve(Rblk, rho.T @ spec.R3ij[i][j] @ theta_lag_ij
                                + Bh.T @ Phi_j + Dh.T @ Psi_j)
               + gains.K3[j][i])
    return bracket.ravel()


def solve_matching_level2(spec, i, j, frozen, guess, cfg: SolverConfig, rng):
    gains = component_gains(spec, frozen["P"], frozen["Lam"])

    def fun(w):
        return matching_residual_level2(
            spec, i, j, w, frozen["P"], frozen["Lam"], frozen["Phi_j"],
            frozen["Psi_j"], frozen["theta_lag_ij"], frozen["eta_ij"],
            frozen["zeta_ij"], gains=gains)

    w0 = np.asarray(guess, complex).ravel()
    d = spec.dims
    ls_fallback = w0.size != d.m3[j][i] * d.n
    roots, iters, best = find_roots(fun, w0, cfg, rng)
    if not roots:
        return None, best, 0, 0, ls_fallback
    dists = [np.linalg.norm(r - w0) for r in roots]
    pick = int(np.argmin(dists))
    w = roots[pick]
    rn = float(np.linalg.norm(fun(w)))
    return w.reshape(d.m2[i][j], d.m3[j][i]), rn, iters[pick], len(roots), ls_fallback


def level2_recursion(spec: ProblemSpec, team: TeamSolution,
                     level1: Level1Parameters, terminal_rho,
                     grid: TimeGrid = None, cfg: SolverConfig = None):
    """Backward sweep producing the managers' parameter paths, mirroring the
    top-level sweep with the twice-substituted system."""
    cfg = cfg or SolverConfig()
    grid = grid or team.grid
    if grid.N != team.grid.N or grid.N != level1.grid.N:
        raise ValueError("level-2 grid must match the team and level-1 grids")
    d = spec.dims
    N, dt, n = grid.N, grid.dt, d.n

    rho = [[np.zeros((N + 1, d.m2[i][j], d.m3[j][i]), complex)
            for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    theta = [[np.zeros((N + 1, d.m2[i][j], d.n), complex)
              for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    gN = team.gains_at(N)
    rho_all = [[None] * N_EXECUTIVES for _ in range(N_MANAGERS)]
    for i in range(N_MANAGERS):
        for j in range(N_EXECUTIVES):
            rho[i][j][N] = np.asarray(terminal_rho[i][j], complex).reshape(
                d.m2[i][j], d.m3[j][i])
            rho_all[i][j] = rho[i][j][N]
    for i in range(N_MANAGERS):
        for j in range(N_EXECUTIVES):
            theta[i][j][N] = level2_state_gain(gN, rho_all, i, j)

    Phi = np.zeros((N + 1, N_EXECUTIVES * n, n), complex)
    Psi = np.zeros((N + 1, N_EXECUTIVES * n, n), complex)
    step_cond = np.full(N + 1, np.nan)
    Phi[N] = np.vstack(spec.G3).astype(complex)
    report = MatchingReport(level=2, jump_cap_factor=cfg.jump_cap_factor)

    for k in range(N, 0, -1):
        eta_k, zeta_k = level1.at(k)
        theta_k = [[theta[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        rho_k = [[rho[i][j][k] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        view_k = assemble_executive_view(spec, team.P[k], team.Lambda[k],
                                         eta_k, zeta_k, theta_k, rho_k)
        Phi[k - 1], Psi[k], step_cond[k] = step_Phi(view_k, Phi[k], dt,
                                                    cond_cap=cfg.cond_cap, node=k)
        psi_match = extract_Psi(view_k, Phi[k - 1], cond_cap=cfg.cond_cap, node=k - 1)
        eta_l, zeta_l = level1.at(k - 1)
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                frozen = dict(P=team.P[k - 1], Lam=team.Lambda[k - 1],
                              Phi_j=Phi[k - 1, j * n:(j + 1) * n],
                              Psi_j=psi_match[j * n:(j + 1) * n],
                              theta_lag_ij=theta[i][j][k],
                              eta_ij=eta_l[i][j], zeta_ij=zeta_l[i][j])
                rng = np.random.default_rng(
                    np.random.SeedSequence((cfg.seed, 2, k - 1, i, j)))
                sol, rn, iters, n_roots, ls = solve_matching_level2(
                    spec, i, j, frozen, rho[i][j][k], cfg, rng)
                if sol is None or rn > cfg.tol:
                    block = f"executive ({i},{j})" \
                        + (" (least-squares floor)" if ls else "")
                    raise MatchingError(k - 1, block, rn, cfg.tol)
                jump = float(np.linalg.norm((sol - rho[i][j][k]).ravel()))
                report.add(k - 1, f"executive ({i},{j})", rn, iters, n_roots, jump, ls)
                rho[i][j][k - 1] = sol
        g = team.gains_at(k - 1)
        rho_l = [[rho[i][j][k - 1] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                theta[i][j][k - 1] = level2_state_gain(g, rho_l, i, j)

    eta_0, zeta_0 = level1.at(0)
    theta_0 = [[theta[i][j][0] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    rho_0 = [[rho[i][j][0] for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    view_0 = assemble_executive_view(spec, team.P[0], team.Lambda[0],
                                     eta_0, zeta_0, theta_0, rho_0)
    Psi[0] = extract_Psi(view_0, Phi[0], cond_cap=cfg.cond_cap, node=0)

    params = Level2Parameters(grid=grid, rho=rho, theta=theta, Phi=Phi,
                              Psi=Psi, step_cond=step_cond)
    return params, report


# ---------------------------------------------------------------------------
# identity checks (report-only)
# ---------------------------------------------------------------------------

def incentive_identity_check(level1: Level1Parameters, level2: Level2Parameters,
                             team: TeamSolution):
    """Verify, node-wise as gain matrices, that each announced rule applied
    to the team-optimal follower responses reproduces the team-optimal
    control of its own level. The state coefficients are computed from their
    defining identities, so these residuals are rounding-level by
    construction; the check guards the wiring.
    """
    N = team.grid.N
    max1 = 0.0
    max2 = 0.0
    for k in range(N + 1):
        g = team.gains_at(k)
        eta_k, zeta_k = level1.at(k)
        for i in range(N_MANAGERS):
            for j in range(N_EXECUTIVES):
                res1 = (level1.xi[i][j][k]
                        - np.asarray(eta_k[i][j]) @ g.K2[i][j]
                        - np.asarray(zeta_k[i][j]) @ g.K3[j][i]
                        + g.K1[i])
                max1 = max(max1, float(np.max(np.abs(res1))))
                if level2 is not None:
                    res2 = (level2.theta[i][j][k]
                            - np.asarray(level2.rho[i][j][k]) @ g.K3[j][i]
                            + g.K2[i][j])
                    max2 = max(max2, float(np.max(np.abs(res2))))
    return {"level1_max_residual": max1,
            "level2_max_residual": max2 if level2 is not None else None}
