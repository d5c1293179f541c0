"""Seeded Euler-Maruyama simulation of the hierarchy and Monte-Carlo cost
estimation.

Every supported mode reduces to linear state feedback, so trajectories are
advanced by one shared kernel on per-node effective drift/diffusion
coefficients; control paths are recovered on demand from the recorded gain
schedules (they are linear in the state), which keeps large bundles cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, TrigameError
from .model import N_EXECUTIVES, N_MANAGERS, ProblemSpec
from .riccati import TimeGrid
from .team import TeamSolution

IMAG_RESIDUE_TOL = 1e-8


@dataclass
class NoiseBundle:
    """Brownian increments, one independent substream per path derived from
    (seed, path index); regeneration is bit-identical."""

    seed: int
    grid: TimeGrid
    increments: np.ndarray      # (n_paths, N)

    @property
    def n_paths(self):
        return self.increments.shape[0]


def sample_brownian(grid: TimeGrid, n_paths: int, seed: int) -> NoiseBundle:
    if n_paths < 1:
        raise TrigameError("n_paths must be >= 1")
    inc = np.empty((n_paths, grid.N))
    sd = np.sqrt(grid.dt)
    for p in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence((seed, p)))
        inc[p] = rng.normal(0.0, sd, grid.N)
    return NoiseBundle(seed=seed, grid=grid, increments=inc)


@dataclass
class TrajectoryBundle:
    """Simulated states plus the per-node feedback schedules that generated
    them (u_c = control_gain @ x, v = disturbance_gain @ x). Controls and
    the disturbance are linear in the state and are materialized lazily."""

    mode: str
    grid: TimeGrid
    states: np.ndarray              # (n_paths, N+1, n)
    control_gain: np.ndarray        # (N+1, mc, n), complex
    disturbance_gain: np.ndarray    # (N+1, n_v, n)
    noise: NoiseBundle
    _controls: np.ndarray = field(default=None, repr=False)

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def controls(self):
        """(n_paths, N+1, mc) complex; cached on first access."""
        if self._controls is None:
            self._controls = np.einsum("kmn,pkn->pkm", self.control_gain, self.states)
        return self._controls

    @property
    def disturbance(self):
        return np.einsum("kmn,pkn->pkm", self.disturbance_gain, self.states)


def _check_imag(name, gain):
    resid = np.max(np.abs(gain.imag))
    scale = 1.0 + np.max(np.abs(gain.real))
    if resid > IMAG_RESIDUE_TOL * scale:
        raise TrigameError(
            f"{name}: imaginary residue {resid:.3e} exceeds "
            f"{IMAG_RESIDUE_TOL:.0e} x magnitude; incentive parameters do not "
            "cancel in closed loop (matching not converged?)")


def _advance(a_eff, b_eff, x0, noise: NoiseBundle, mode, control_gain,
             disturbance_gain) -> TrajectoryBundle:
    """Shared Euler-Maruyama kernel for per-node linear feedback dynamics."""
    grid = noise.grid
    n = np.asarray(x0).size
    n_paths = noise.n_paths
    states = np.empty((n_paths, grid.N + 1, n))
    states[:, 0, :] = np.asarray(x0, float).reshape(n)
    dt = grid.dt
    for k in range(grid.N):
        a_k = np.real(a_eff[k])
        b_k = np.real(b_eff[k])
        x = states[:, k, :]
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = x + (x @ a_k.T) * dt + (x @ b_k.T) * noise.increments[:, k][:, None]
        if not np.all(np.isfinite(nxt)):
            bad = np.argwhere(~np.isfinite(nxt))
            raise DivergenceError(k + 1, f"simulation (path {bad[0][0]})")
        states[:, k + 1, :] = nxt
    return TrajectoryBundle(mode=mode, grid=grid, states=states,
                            control_gain=np.asarray(control_gain, complex),
                            disturbance_gain=np.real(disturbance_gain),
                            noise=noise)


def simulate_closed_loop(a_path, b_path, x0, noise: NoiseBundle,
                         control_gain=None, disturbance_gain=None,
                         mode="team-closed-loop") -> TrajectoryBundle:
    """Euler-Maruyama of dx = a x dt + b x dW on the noise grid."""
    grid = noise.grid
    n = np.asarray(x0).size
    if control_gain is None:
        control_gain = np.zeros((grid.N + 1, 0, n))
    if disturbance_gain is None:
        disturbance_gain = np.zeros((grid.N + 1, 0, n))
    return _advance(a_path, b_path, x0, noise, mode, control_gain, disturbance_gain)


@dataclass
class GainDeviation:
    """Constant-in-time additive perturbation of the feedback schedules."""

    dKc: np.ndarray = None      # (mc, n) added to Kc (controls u = -(Kc+dKc) x)
    dKv: np.ndarray = None      # (n_v, n) added to Kv


def effective_incentive_gains(spec: ProblemSpec, team: TeamSolution, level1,
                              level2, k):
    """Compose the announced rules bottom-up at node k into one centralized
    feedback matrix (u_c = G x) plus per-level pieces."""
    central = team.central
    n = spec.dims.n
    G = np.zeros((central.mc, n), complex)
    g = team.gains_at(k)
    eta_k, zeta_k = level1.at(k)
    theta_k, rho_k = level2.at(k)
    g3 = [[-g.K3[j][i].astype(complex) for i in range(N_MANAGERS)]
          for j in range(N_EXECUTIVES)]
    g2 = [[theta_k[i][j] + rho_k[i][j] @ g3[j][i] for j in range(N_EXECUTIVES)]
          for i in range(N_MANAGERS)]
    for j in range(N_EXECUTIVES):
        for i in range(N_MANAGERS):
            G[central.block(3, i, j).sl] = g3[j][i]
    for i in range(N_MANAGERS):
        for j in range(N_EXECUTIVES):
            G[central.block(2, i, j).sl] = g2[i][j]
    for i in range(N_MANAGERS):
        g1 = -g.K1[i].astype(complex)
        for j in range(N_EXECUTIVES):
            g1 = g1 + eta_k[i][j] @ (g2[i][j] + g.K2[i][j])
            g1 = g1 + zeta_k[i][j] @ (g3[j][i] + g.K3[j][i])
        G[central.block(1, i).sl] = g1
    return G


def simulate_hierarchy(spec: ProblemSpec, team: TeamSolution, level1=None,
                       level2=None, noise: NoiseBundle = None, mode="team",
                       deviation: GainDeviation = None) -> TrajectoryBundle:
    """Simulate the full hierarchy under one of three modes.

    ``team``: all channels at their team-optimal gains. ``deviation``: team
    gains plus the given constant perturbation (zero perturbation is
    bit-identical to team mode). ``incentive``: bottom level at team gains,
    the upper levels responding through their announced rules; requires
    converged level-1 and level-2 parameters. The designed disturbance
    feedback is applied in every mode.
    """
    grid = noise.grid
    if grid.N != team.grid.N:
        raise TrigameError("noise grid must match the solution grid")
    central = team.central
    n = spec.dims.n

    if mode in ("team", "deviation"):
        dev = deviation if deviation is not None else GainDeviation()
        dKc = dev.dKc if dev.dKc is not None else np.zeros((central.mc, n))
        dKv = dev.dKv if dev.dKv is not None else np.zeros((spec.dims.n_v, n))
        Kc = team.Kc + dKc[None, :, :]
        Kv = team.Kv + dKv[None, :, :]
        a_eff = spec.A[None] - np.einsum("nm,kmj->knj", central.Bc, Kc) \
            + np.einsum("nm,kmj->knj", spec.E, Kv)
        b_eff = spec.C[None] - np.einsum("nm,kmj->knj", central.Dc, Kc)
        tag = "team-closed-loop" if mode == "team" else "deviation"
        return _advance(a_eff, b_eff, spec.x0, noise, tag, -Kc.astype(complex), Kv)

    if mode != "incentive":
        raise TrigameError(f"unknown mode {mode!r}")
    if level1 is None or level2 is None:
        raise TrigameError("incentive mode needs converged level-1 and level-2 parameters")

    N = grid.N
    Gc = np.empty((N + 1, central.mc, n), complex)
    for k in range(N + 1):
        Gc[k] = effective_incentive_gains(spec, team, level1, level2, k)
    a_eff = spec.A[None] + np.einsum("nm,kmj->knj", central.Bc, Gc) \
        + np.einsum("nm,kmj->knj", spec.E, team.Kv)
    b_eff = spec.C[None] + np.einsum("nm,kmj->knj", central.Dc, Gc)
    _check_imag("incentive drift", a_eff)
    _check_imag("incentive diffusion", b_eff)
    return _advance(a_eff, b_eff, spec.x0, noise, "incentive-representation",
                    Gc, team.Kv)


# ---------------------------------------------------------------------------
# Monte-Carlo cost estimation
# ---------------------------------------------------------------------------

@dataclass
class CostReport:
    """Means and standard errors of every cost functional, plus the
    per-path values (needed for common-noise comparisons)."""

    n_paths: int
    seed: int
    estimates: dict             # name -> (mean, se)
    per_path: dict              # name -> (n_paths,) array

    def mean(self, name):
        return self.estimates[name][0]

    def se(self, name):
        return self.estimates[name][1]


def _qf_paths(states, W):
    """Per-path sum over nodes of x_k^T W_k x_k, states (p, K, n), W (K, n, n)."""
    return np.einsum("pki,kij,pkj->p", states, W, states, optimize=True)


def estimate_costs(traj: TrajectoryBundle, spec: ProblemSpec,
                   central) -> CostReport:
    """Left-endpoint Riemann sums of every player's running cost plus the
    terminal terms, averaged over paths.

    Every mode plays linear feedback, so each running cost collapses to a
    per-node quadratic form in the state; the recorded gain schedules carry
    the control dependence (their imaginary residue must be negligible:
    converged incentives cancel it).
    """
    grid = traj.grid
    dt = grid.dt
    n_paths = traj.n_paths
    gain = traj.control_gain
    _check_imag("control gains", gain)
    Gr = gain.real                           # (N+1, mc, n)
    Gv = traj.disturbance_gain
    i_range, j_range = range(N_MANAGERS), range(N_EXECUTIVES)
    g2w = spec.gamma ** 2

    def running(W):
        """Accumulate x^T W_k x over nodes 0..N-1 (left endpoint)."""
        return _qf_paths(traj.states[:, :grid.N, :], W) * dt

    def terminal(G):
        xT = traj.states[:, grid.N, :]
        return np.einsum("pi,ij,pj->p", xT, G, xT)

    def gain_weight(sls_weights):
        """Per-node state weight sum of G_blk^T R G_blk for the given
        (slice, R) pairs."""
        W = np.zeros((grid.N, spec.dims.n, spec.dims.n))
        for sl, R in sls_weights:
            g = Gr[:grid.N, sl, :]
            W += np.einsum("kmi,mq,kqj->kij", g, R, g, optimize=True)
        return W

    W_u = gain_weight([(b.sl, central.Rc[b.sl, b.sl]) for b in central.blocks])
    W_v = np.einsum("kmi,kmj->kij", Gv[:grid.N], Gv[:grid.N])
    Q1k = np.broadcast_to(spec.Q1, (grid.N,) + spec.Q1.shape)

    J1 = running(Q1k + W_u) + terminal(spec.G1)
    Jv = running(g2w * W_v - Q1k - W_u) - terminal(spec.G1)
    J2, J3 = [], []
    for i in i_range:
        pairs = [(central.block(1, i).sl, spec.R2[i])]
        pairs += [(central.block(2, i, j).sl, spec.R2ij[i][j]) for j in j_range]
        pairs += [(central.block(3, i, j).sl, spec.Rbar2[j][i]) for j in j_range]
        Wk = np.broadcast_to(spec.Q2[i], Q1k.shape) + gain_weight(pairs)
        J2.append(running(Wk) + terminal(spec.G2[i]))
    for j in j_range:
        pairs = [(central.block(2, i, j).sl, spec.R3ij[i][j]) for i in i_range]
        pairs += [(central.block(3, i, j).sl, spec.Rbar3[j][i]) for i in i_range]
        Wk = np.broadcast_to(spec.Q3[j], Q1k.shape) + gain_weight(pairs)
        J3.append(running(Wk) + terminal(spec.G3[j]))

    def stat(arr):
        se = float(arr.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
        return float(arr.mean()), se

    estimates = {"J1": stat(J1), "Jv": stat(Jv)}
    per_path = {"J1": J1, "Jv": Jv}
    for i in i_range:
        estimates[f"J2_{i + 1}"] = stat(J2[i])
        per_path[f"J2_{i + 1}"] = J2[i]
    for j in j_range:
        estimates[f"J3_{j + 1}"] = stat(J3[j])
        per_path[f"J3_{j + 1}"] = J3[j]
    return CostReport(n_paths=n_paths, seed=traj.noise.seed,
                      estimates=estimates, per_path=per_path)
