"""Problem definition and coefficient assembly for the three-level hierarchy.

The hierarchy shape is fixed: one top decision maker, two managers (index i),
three executives (index j). Sizes inside each slot are free. All containers
are indexed 0-based: ``B2[i][j]`` couples manager i's order to executive j,
``B3[j][i]`` couples executive j's effort back to manager i.

Three coefficient views are assembled here:

* the centralized view, concatenating every control channel into one input;
* the manager view ("barred" system), obtained by substituting the top
  level's announced incentive rule and the designed disturbance feedback;
* the executive view ("hatted" system), obtained by additionally
  substituting the managers' announced rules.

Incentive parameters (eta, zeta, theta, rho) may be complex; all algebra on
them uses plain transposes (analytic continuation of the real formulas),
never conjugation, so residual maps stay holomorphic for the Newton solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError

N_MANAGERS = 2
N_EXECUTIVES = 3

PSD_TOL = -1e-10
PD_TOL = 1e-10
SYM_TOL = 1e-12


@dataclass(frozen=True)
class Dimensions:
    """State/control sizes. m1[i]: top-level channel to manager i;
    m2[i][j]: manager i's channel to executive j; m3[j][i]: executive j's
    channel serving manager i."""

    n: int
    n_v: int
    m1: tuple
    m2: tuple
    m3: tuple

    def __post_init__(self):
        if len(self.m1) != N_MANAGERS or len(self.m2) != N_MANAGERS:
            raise StructureError("m1/m2", (N_MANAGERS,), (len(self.m1), len(self.m2)))
        if len(self.m3) != N_EXECUTIVES:
            raise StructureError("m3", (N_EXECUTIVES,), (len(self.m3),))
        sizes = [self.n, self.n_v, *self.m1]
        for row in self.m2:
            sizes += list(row)
        for row in self.m3:
            sizes += list(row)
        if any(int(s) <= 0 for s in sizes):
            raise StructureError("dimensions", ("all > 0",), tuple(sizes))

    @property
    def mc(self):
        """Total width of the centralized control vector."""
        return (sum(self.m1) + sum(sum(r) for r in self.m2)
                + sum(sum(r) for r in self.m3))

    def manager_bundle_width(self, i):
        """Width of manager i's decision bundle (its three orders plus the
        three executive efforts serving it)."""
        return sum(self.m2[i]) + sum(self.m3[j][i] for j in range(N_EXECUTIVES))

    def executive_bundle_width(self, j):
        return sum(self.m3[j])


@dataclass
class ProblemSpec:
    """All coefficient matrices of the game, constant in time.

    Naming follows the cost structure: R[i] weights the top level's own
    channel i, R1[i][j] / Rbar1[j][i] weight the lower channels in the top
    cost; R2*, Rbar2* belong to manager costs; R3ij / Rbar3 to executive
    costs. G* are terminal weights.
    """

    dims: Dimensions
    A: np.ndarray
    C: np.ndarray
    E: np.ndarray
    B1: list
    D1: list
    B2: list
    D2: list
    B3: list
    D3: list
    Q1: np.ndarray
    Q2: list
    Q3: list
    R: list
    R1: list
    Rbar1: list
    R2: list
    R2ij: list
    Rbar2: list
    R3ij: list
    Rbar3: list
    G1: np.ndarray
    G2: list
    G3: list
    gamma: float
    T: float
    x0: np.ndarray

    def __post_init__(self):
        d = self.dims
        self.A = _as_matrix(self.A, (d.n, d.n), "A")
        self.C = _as_matrix(self.C, (d.n, d.n), "C")
        self.E = _as_matrix(self.E, (d.n, d.n_v), "E")
        self.Q1 = _as_matrix(self.Q1, (d.n, d.n), "Q1")
        self.G1 = _as_matrix(self.G1, (d.n, d.n), "G1")
        self.x0 = np.asarray(self.x0, float).reshape(d.n)
        self.B1 = [_as_matrix(self.B1[i], (d.n, d.m1[i]), f"B1[{i}]") for i in range(N_MANAGERS)]
        self.D1 = [_as_matrix(self.D1[i], (d.n, d.m1[i]), f"D1[{i}]") for i in range(N_MANAGERS)]
        self.B2 = [[_as_matrix(self.B2[i][j], (d.n, d.m2[i][j]), f"B2[{i}][{j}]")
                    for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        self.D2 = [[_as_matrix(self.D2[i][j], (d.n, d.m2[i][j]), f"D2[{i}][{j}]")
                    for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        self.B3 = [[_as_matrix(self.B3[j][i], (d.n, d.m3[j][i]), f"B3[{j}][{i}]")
                    for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
        self.D3 = [[_as_matrix(self.D3[j][i], (d.n, d.m3[j][i]), f"D3[{j}][{i}]")
                    for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
        self.Q2 = [_as_matrix(self.Q2[i], (d.n, d.n), f"Q2[{i}]") for i in range(N_MANAGERS)]
        self.Q3 = [_as_matrix(self.Q3[j], (d.n, d.n), f"Q3[{j}]") for j in range(N_EXECUTIVES)]
        self.G2 = [_as_matrix(self.G2[i], (d.n, d.n), f"G2[{i}]") for i in range(N_MANAGERS)]
        self.G3 = [_as_matrix(self.G3[j], (d.n, d.n), f"G3[{j}]") for j in range(N_EXECUTIVES)]
        self.R = [_as_matrix(self.R[i], (d.m1[i], d.m1[i]), f"R[{i}]") for i in range(N_MANAGERS)]
        self.R2 = [_as_matrix(self.R2[i], (d.m1[i], d.m1[i]), f"R2[{i}]") for i in range(N_MANAGERS)]
        self.R1 = [[_as_matrix(self.R1[i][j], (d.m2[i][j], d.m2[i][j]), f"R1[{i}][{j}]")
                    for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        self.R2ij = [[_as_matrix(self.R2ij[i][j], (d.m2[i][j], d.m2[i][j]), f"R2ij[{i}][{j}]")
                      for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        self.R3ij = [[_as_matrix(self.R3ij[i][j], (d.m2[i][j], d.m2[i][j]), f"R3ij[{i}][{j}]")
                      for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
        self.Rbar1 = [[_as_matrix(self.Rbar1[j][i], (d.m3[j][i], d.m3[j][i]), f"Rbar1[{j}][{i}]")
                       for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
        self.Rbar2 = [[_as_matrix(self.Rbar2[j][i], (d.m3[j][i], d.m3[j][i]), f"Rbar2[{j}][{i}]")
                       for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
        self.Rbar3 = [[_as_matrix(self.Rbar3[j][i], (d.m3[j][i], d.m3[j][i]), f"Rbar3[{j}][{i}]")
                       for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
        self.gamma = float(self.gamma)
        self.T = float(self.T)


def _as_matrix(value, shape, name):
    arr = np.atleast_2d(np.asarray(value, float))
    if arr.shape != tuple(shape):
        raise StructureError(name, shape, arr.shape)
    return arr


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)   # (name, passed, detail)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def add(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def failures(self):
        return [(n, d) for n, ok, d in self.checks if not ok]

    def __str__(self):
        lines = [f"[{'ok' if ok else 'FAIL'}] {name}" + (f" ({d})" if d else "")
                 for name, ok, d in self.checks]
        return "\n".join(lines)


def _check_sym(report, name, M):
    dev = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    report.add(f"{name} symmetric", dev < SYM_TOL, f"max asymmetry {dev:.2e}")


def _check_psd(report, name, M):
    _check_sym(report, name, M)
    lo = float(np.linalg.eigvalsh((M + M.T) / 2).min()) if M.size else 0.0
    report.add(f"{name} >= 0", lo >= PSD_TOL, f"min eigenvalue {lo:.3e}")


def _check_pd(report, name, M, delta):
    _check_sym(report, name, M)
    lo = float(np.linalg.eigvalsh((M + M.T) / 2).min()) if M.size else 0.0
    report.add(f"{name} >> 0", lo >= delta - PD_TOL, f"min eigenvalue {lo:.3e}")


def validate_problem(spec: ProblemSpec, delta: float = 1e-8) -> ValidationReport:
    """Check the standing positivity assumptions on the cost weights.

    State weights and terminal weights must be positive semidefinite; every
    control weight must be positive definite with smallest eigenvalue at
    least ``delta``. The report carries one line per check with the
    offending eigenvalue on failure.
    """
    rep = ValidationReport()
    if spec.gamma <= 0:
        rep.add("gamma > 0", False, f"gamma = {spec.gamma}")
    else:
        rep.add("gamma > 0", True)
    if spec.T <= 0:
        rep.add("T > 0", False, f"T = {spec.T}")
    else:
        rep.add("T > 0", True)

    _check_psd(rep, "Q1", spec.Q1)
    _check_psd(rep, "G1", spec.G1)
    for i in range(N_MANAGERS):
        _check_psd(rep, f"Q2[{i}]", spec.Q2[i])
        _check_psd(rep, f"G2[{i}]", spec.G2[i])
    for j in range(N_EXECUTIVES):
        _check_psd(rep, f"Q3[{j}]", spec.Q3[j])
        _check_psd(rep, f"G3[{j}]", spec.G3[j])

    for i in range(N_MANAGERS):
        _check_pd(rep, f"R[{i}]", spec.R[i], delta)
        _check_pd(rep, f"R2[{i}]", spec.R2[i], delta)
        for j in range(N_EXECUTIVES):
            _check_pd(rep, f"R1[{i}][{j}]", spec.R1[i][j], delta)
            _check_pd(rep, f"R2ij[{i}][{j}]", spec.R2ij[i][j], delta)
            _check_pd(rep, f"R3ij[{i}][{j}]", spec.R3ij[i][j], delta)
    for j in range(N_EXECUTIVES):
        for i in range(N_MANAGERS):
            _check_pd(rep, f"Rbar1[{j}][{i}]", spec.Rbar1[j][i], delta)
            _check_pd(rep, f"Rbar2[{j}][{i}]", spec.Rbar2[j][i], delta)
            _check_pd(rep, f"Rbar3[{j}][{i}]", spec.Rbar3[j][i], delta)
    return rep


# ---------------------------------------------------------------------------
# centralized view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    """Identity and placement of one control channel inside the centralized
    vector: level 1 blocks carry (i,), level 2 (i, j), level 3 (j, i)."""

    level: int
    i: int
    j: int          # -1 for level-1 blocks
    offset: int
    width: int

    @property
    def label(self):
        if self.level == 1:
            return f"u_1_{self.i + 1}"
        if self.level == 2:
            return f"u_2_{self.i + 1}_{self.j + 1}"
        return f"u_3_{self.j + 1}_{self.i + 1}"

    @property
    def sl(self):
        return slice(self.offset, self.offset + self.width)


@dataclass
class CentralizedForm:
    """Concatenated input matrices and block-diagonal weight, in the fixed
    order: both top channels, manager orders (i major, j minor), executive
    efforts (j major, i minor)."""

    Bc: np.ndarray
    Dc: np.ndarray
    Rc: np.ndarray
    blocks: tuple

    @property
    def mc(self):
        return self.Bc.shape[1]

    def block(self, level, i, j=None):
        for b in self.blocks:
            if b.level == level and b.i == i and (level == 1 or b.j == j):
                return b
        raise KeyError((level, i, j))

    def labels(self):
        return [b.label for b in self.blocks]


def assemble_centralized(spec: ProblemSpec) -> CentralizedForm:
    """Stack every control channel of the hierarchy into a single input."""
    cols_B, cols_D, weights, blocks = [], [], [], []
    offset = 0

    def push(level, i, j, B, D, R):
        nonlocal offset
        w = B.shape[1]
        cols_B.append(B)
        cols_D.append(D)
        weights.append(R)
        blocks.append(Block(level, i, -1 if j is None else j, offset, w))
        offset += w

    for i in range(N_MANAGERS):
        push(1, i, None, spec.B1[i], spec.D1[i], spec.R[i])
    for i in range(N_MANAGERS):
        for j in range(N_EXECUTIVES):
            push(2, i, j, spec.B2[i][j], spec.D2[i][j], spec.R1[i][j])
    for j in range(N_EXECUTIVES):
        for i in range(N_MANAGERS):
            push(3, i, j, spec.B3[j][i], spec.D3[j][i], spec.Rbar1[j][i])

    Bc = np.hstack(cols_B)
    Dc = np.hstack(cols_D)
    Rc = np.zeros((offset, offset))
    for b, R in zip(blocks, weights):
        Rc[b.sl, b.sl] = R
    return CentralizedForm(Bc=Bc, Dc=Dc, Rc=Rc, blocks=tuple(blocks))


# ---------------------------------------------------------------------------
# per-component feedback gains (u = -K x conventions)
# ---------------------------------------------------------------------------

@dataclass
class ComponentGains:
    """Team feedback gains per channel at one node, u = -K x."""

    K1: list      # [i] -> (m1[i], n)
    K2: list      # [i][j] -> (m2[i][j], n)
    K3: list      # [j][i] -> (m3[j][i], n)

    def manager_bundle(self, i):
        """Gain of manager i's bundle, channels ordered (orders j=0..2,
        efforts j=0..2)."""
        rows = [self.K2[i][j] for j in range(N_EXECUTIVES)]
        rows += [self.K3[j][i] for j in range(N_EXECUTIVES)]
        return np.vstack(rows)


def component_gains(spec: ProblemSpec, P: np.ndarray, Lam: np.ndarray) -> ComponentGains:
    """Per-channel gains R_block^{-1} (B_block^T P + D_block^T Lam)."""
    K1 = [np.linalg.solve(spec.R[i], spec.B1[i].T @ P + spec.D1[i].T @ Lam)
          for i in range(N_MANAGERS)]
    K2 = [[np.linalg.solve(spec.R1[i][j], spec.B2[i][j].T @ P + spec.D2[i][j].T @ Lam)
           for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    K3 = [[np.linalg.solve(spec.Rbar1[j][i], spec.B3[j][i].T @ P + spec.D3[j][i].T @ Lam)
           for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]
    return ComponentGains(K1=K1, K2=K2, K3=K3)


def leader_state_gain(gains: ComponentGains, eta, zeta, i):
    """Aggregate state coefficient of the top level's announced rule for
    channel i: -K1[i] + sum_j eta[i][j] K2[i][j] + sum_j zeta[i][j] K3[j][i].

    The leader-gain term enters once per channel: the announced rule offsets
    each follower control against its team value, so the composed state
    coefficient collapses back onto the team gain when followers comply.
    """
    out = -gains.K1[i].astype(complex)
    for j in range(N_EXECUTIVES):
        out = out + np.asarray(eta[i][j]) @ gains.K2[i][j]
        out = out + np.asarray(zeta[i][j]) @ gains.K3[j][i]
    return out


def level1_state_gain(gains: ComponentGains, eta, zeta, i, j):
    """Per-pair state coefficient of the announced top-level rule
    (reported alongside eta and zeta)."""
    return (-gains.K1[i].astype(complex)
            + np.asarray(eta[i][j]) @ gains.K2[i][j]
            + np.asarray(zeta[i][j]) @ gains.K3[j][i])


def level2_state_gain(gains: ComponentGains, rho, i, j):
    """State coefficient of manager i's announced rule toward executive j."""
    return -gains.K2[i][j].astype(complex) + np.asarray(rho[i][j]) @ gains.K3[j][i]


# ---------------------------------------------------------------------------
# manager view (substituted top-level rule + disturbance feedback)
# ---------------------------------------------------------------------------

@dataclass
class ManagerForm:
    """Per-manager coefficients of the substituted system at one node."""

    Bbar: np.ndarray     # n x w_i
    Dbar: np.ndarray
    Rci: np.ndarray      # w_i x w_i
    S2i: np.ndarray      # n x w_i
    Qbar: np.ndarray     # n x n


@dataclass
class ManagerView:
    """Shared drift/diffusion plus both managers' forms at one node."""

    Abar: np.ndarray
    Cbar: np.ndarray
    Xi: list             # aggregate leader state gains per i
    forms: list          # [ManagerForm] * 2
    gains: ComponentGains


def assemble_manager_view(spec: ProblemSpec, P, Lam, eta, zeta, node=None) -> ManagerView:
    """Coefficients seen by the managers once the top level's rule and the
    disturbance feedback are substituted into the dynamics and their costs.

    ``eta[i][j]`` and ``zeta[i][j]`` may be complex. The ``node`` argument is
    accepted for piecewise-constant extensions; coefficients here are
    constant in time.
    """
    d = spec.dims
    g = component_gains(spec, P, Lam)
    att = spec.gamma ** -2 * (spec.E @ spec.E.T @ P)
    Xi = [leader_state_gain(g, eta, zeta, i) for i in range(N_MANAGERS)]
    Abar = spec.A + att + sum(spec.B1[i] @ Xi[i] for i in range(N_MANAGERS))
    Cbar = spec.C.astype(complex) + sum(spec.D1[i] @ Xi[i] for i in range(N_MANAGERS))

    forms = []
    for i in range(N_MANAGERS):
        H = np.hstack([np.asarray(eta[i][j], dtype=complex).reshape(d.m1[i], d.m2[i][j])
                       for j in range(N_EXECUTIVES)]
                      + [np.asarray(zeta[i][j], dtype=complex).reshape(d.m1[i], d.m3[j][i])
                         for j in range(N_EXECUTIVES)])
        Bi = np.hstack([spec.B2[i][j] for j in range(N_EXECUTIVES)]
                       + [spec.B3[j][i] for j in range(N_EXECUTIVES)])
        Di = np.hstack([spec.D2[i][j] for j in range(N_EXECUTIVES)]
                       + [spec.D3[j][i] for j in range(N_EXECUTIVES)])
        base = _blkdiag([spec.R2ij[i][j] for j in range(N_EXECUTIVES)]
                        + [spec.Rbar2[j][i] for j in range(N_EXECUTIVES)])
        forms.append(ManagerForm(
            Bbar=Bi + spec.B1[i] @ H,
            Dbar=Di + spec.D1[i] @ H,
            Rci=base.astype(complex) + H.T @ spec.R2[i] @ H,
            S2i=Xi[i].T @ spec.R2[i] @ H,
            Qbar=spec.Q2[i].astype(complex) + Xi[i].T @ spec.R2[i] @ Xi[i],
        ))
    return ManagerView(Abar=Abar, Cbar=Cbar, Xi=Xi, forms=forms, gains=g)


# ---------------------------------------------------------------------------
# executive view (both upper rules substituted)
# ---------------------------------------------------------------------------

@dataclass
class ExecutiveForm:
    """Per-executive coefficients of the twice-substituted system."""

    Bhat: np.ndarray     # n x (m3[j][0] + m3[j][1])
    Dhat: np.ndarray
    R3j: np.ndarray      # block-diagonal 2-block
    S3j: np.ndarray      # n x bundle
    Qhat: np.ndarray


@dataclass
class ExecutiveView:
    Ahat: np.ndarray
    Chat: np.ndarray
    forms: list          # [ExecutiveForm] * 3
    gains: ComponentGains


def assemble_executive_view(spec: ProblemSpec, P, Lam, eta, zeta, theta, rho,
                            node=None) -> ExecutiveView:
    """Coefficients seen by the executives once both upper levels' announced
    rules and the disturbance feedback are substituted."""
    d = spec.dims
    g = component_gains(spec, P, Lam)
    att = spec.gamma ** -2 * (spec.E @ spec.E.T @ P)
    Ahat = spec.A.astype(complex) + att
    Chat = spec.C.astype(complex)
    for i in range(N_MANAGERS):
        lead = leader_state_gain(g, eta, zeta, i)
        lead = lead + sum(np.asarray(eta[i][j]) @ np.asarray(theta[i][j])
                          for j in range(N_EXECUTIVES))
        Ahat = Ahat + spec.B1[i] @ lead
        Chat = Chat + spec.D1[i] @ lead
        for j in range(N_EXECUTIVES):
            Ahat = Ahat + spec.B2[i][j] @ np.asarray(theta[i][j])
            Chat = Chat + spec.D2[i][j] @ np.asarray(theta[i][j])

    forms = []
    for j in range(N_EXECUTIVES):
        Bh, Dh, Rblocks, Scols = [], [], [], []
        Qh = spec.Q3[j].astype(complex)
        for i in range(N_MANAGERS):
            r = np.asarray(rho[i][j], dtype=complex).reshape(d.m2[i][j], d.m3[j][i])
            th = np.asarray(theta[i][j], dtype=complex).reshape(d.m2[i][j], d.n)
            Bh.append(spec.B1[i] @ (np.asarray(eta[i][j]) @ r + np.asarray(zeta[i][j]))
                      + spec.B2[i][j] @ r + spec.B3[j][i])
            Dh.append(spec.D1[i] @ (np.asarray(eta[i][j]) @ r + np.asarray(zeta[i][j]))
                      + spec.D2[i][j] @ r + spec.D3[j][i])
            Rblocks.append(spec.Rbar3[j][i].astype(complex) + r.T @ spec.R3ij[i][j] @ r)
            Scols.append(th.T @ spec.R3ij[i][j] @ r)
            Qh = Qh + th.T @ spec.R3ij[i][j] @ th
        forms.append(ExecutiveForm(
            Bhat=np.hstack(Bh), Dhat=np.hstack(Dh),
            R3j=_blkdiag(Rblocks), S3j=np.hstack(Scols), Qhat=Qh,
        ))
    return ExecutiveView(Ahat=Ahat, Chat=Chat, forms=forms, gains=g)


def _blkdiag(blocks):
    blocks = [np.atleast_2d(b) for b in blocks]
    dtype = complex if any(np.iscomplexobj(b) for b in blocks) else float
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=dtype)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
