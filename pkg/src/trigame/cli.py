"""Configuration ingestion, pipeline orchestration, and artifact emission.

Pipeline stages run in dependency order: validate -> solve (team flow and
gains) -> incentive (both recursions) -> simulate -> verify, plus sweep
emissions over the attenuation level and the terminal parameter scale.
Every run writes CSV series (17 significant digits) and a manifest with the
config hash and the SHA-256 of each emitted file; identical configurations
reproduce identical file hashes.

Exit codes: 0 success, 2 config error, 3 solver divergence or conditioning
failure, 4 matching non-convergence, 5 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigError, DivergenceError, InvertibilityError,
                     MatchingError, TrigameError, VerificationFailure)
from .incentive import (SolverConfig, incentive_identity_check,
                        level1_recursion, level2_recursion)
from .model import (Dimensions, N_EXECUTIVES, N_MANAGERS, ProblemSpec,
                    assemble_centralized, validate_problem)
from .riccati import TimeGrid, second_moment, solve_P
from .simulate import (estimate_costs, sample_brownian,
                       simulate_closed_loop, simulate_hierarchy)
from .team import analytic_costs, team_gains
from .verify import VerifyConfig, run_verification

STAGES = ("validate", "solve", "incentive", "simulate", "verify")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    spec: ProblemSpec
    N: int
    refinement: int
    n_paths: int
    seed: int
    terminal_eta: list
    terminal_zeta: list
    terminal_rho: list
    matching_tol: float
    condition_cap: float
    p_residual_cap: float
    gamma_sweep: list
    terminal_scale_sweep: list
    svg: bool
    raw: dict = field(repr=False, default=None)

    @property
    def grid(self):
        return TimeGrid(self.spec.T, self.N)

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _require_keys(d, allowed, required, path):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {path}.{sorted(unknown)[0]}")
    for k in required:
        if k not in d:
            raise ConfigError(f"missing key {path}.{k}")


def _entry(value, shape, path, allow_complex=False):
    """Coerce a scalar / nested row-major list / [re, im] leaf into an array
    of the declared shape."""
    def leaf(v):
        if isinstance(v, bool):
            raise ConfigError(f"{path}: bad numeric entry {v!r}")
        if isinstance(v, (int, float)):
            return complex(v) if allow_complex else float(v)
        if allow_complex and isinstance(v, list) and len(v) == 2 \
                and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                        for x in v):
            return complex(v[0], v[1])
        raise ConfigError(f"{path}: bad numeric entry {v!r}")

    def walk(v, dims):
        if not dims:
            return leaf(v)
        if not isinstance(v, list) or len(v) != dims[0]:
            raise ConfigError(f"{path}: expected a list of length {dims[0]}")
        return [walk(x, dims[1:]) for x in v]

    size = int(np.prod(shape))
    if isinstance(value, (int, float)) or (
            allow_complex and isinstance(value, list) and len(value) == 2
            and all(isinstance(x, (int, float)) for x in value)):
        if size != 1:
            raise ConfigError(f"{path}: scalar given for shape {tuple(shape)}")
        return np.full(shape, leaf(value),
                       dtype=complex if allow_complex else float)
    nested = walk(value, list(shape))
    return np.asarray(nested, dtype=complex if allow_complex else float)


def _parse_problem(p):
    _require_keys(p, allowed=(
        "dims", "A", "C", "E", "B1", "D1", "B2", "D2", "B3", "D3", "Q1",
        "Q2", "Q3", "R", "R1", "Rbar1", "R2", "R2ij", "Rbar2", "R3ij",
        "Rbar3", "G1", "G2", "G3", "gamma", "T", "x0"), required=(
        "dims", "A", "C", "E", "B1", "D1", "B2", "D2", "B3", "D3", "Q1",
        "Q2", "Q3", "R", "R1", "Rbar1", "R2", "R2ij", "Rbar2", "R3ij",
        "Rbar3", "G1", "G2", "G3", "gamma", "T", "x0"), path="problem")
    dd = p["dims"]
    _require_keys(dd, allowed=("n", "n_v", "m1", "m2", "m3"),
                  required=("n", "n_v", "m1", "m2", "m3"), path="problem.dims")
    dims = Dimensions(n=int(dd["n"]), n_v=int(dd["n_v"]),
                      m1=tuple(int(v) for v in dd["m1"]),
                      m2=tuple(tuple(int(v) for v in row) for row in dd["m2"]),
                      m3=tuple(tuple(int(v) for v in row) for row in dd["m3"]))
    n, n_v = dims.n, dims.n_v
    if not (isinstance(p["gamma"], (int, float)) and p["gamma"] > 0):
        raise ConfigError("problem.gamma: attenuation must be a positive number")

    def per_i(name, shape_of):
        return [_entry(p[name][i], shape_of(i), f"problem.{name}[{i}]")
                for i in range(N_MANAGERS)]

    def per_ij(name, shape_of):
        return [[_entry(p[name][i][j], shape_of(i, j), f"problem.{name}[{i}][{j}]")
                 for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]

    def per_ji(name, shape_of):
        return [[_entry(p[name][j][i], shape_of(j, i), f"problem.{name}[{j}][{i}]")
                 for i in range(N_MANAGERS)] for j in range(N_EXECUTIVES)]

    spec = ProblemSpec(
        dims=dims,
        A=_entry(p["A"], (n, n), "problem.A"),
        C=_entry(p["C"], (n, n), "problem.C"),
        E=_entry(p["E"], (n, n_v), "problem.E"),
        B1=per_i("B1", lambda i: (n, dims.m1[i])),
        D1=per_i("D1", lambda i: (n, dims.m1[i])),
        B2=per_ij("B2", lambda i, j: (n, dims.m2[i][j])),
        D2=per_ij("D2", lambda i, j: (n, dims.m2[i][j])),
        B3=per_ji("B3", lambda j, i: (n, dims.m3[j][i])),
        D3=per_ji("D3", lambda j, i: (n, dims.m3[j][i])),
        Q1=_entry(p["Q1"], (n, n), "problem.Q1"),
        Q2=per_i("Q2", lambda i: (n, n)),
        Q3=[_entry(p["Q3"][j], (n, n), f"problem.Q3[{j}]") for j in range(N_EXECUTIVES)],
        R=per_i("R", lambda i: (dims.m1[i], dims.m1[i])),
        R1=per_ij("R1", lambda i, j: (dims.m2[i][j], dims.m2[i][j])),
        Rbar1=per_ji("Rbar1", lambda j, i: (dims.m3[j][i], dims.m3[j][i])),
        R2=per_i("R2", lambda i: (dims.m1[i], dims.m1[i])),
        R2ij=per_ij("R2ij", lambda i, j: (dims.m2[i][j], dims.m2[i][j])),
        Rbar2=per_ji("Rbar2", lambda j, i: (dims.m3[j][i], dims.m3[j][i])),
        R3ij=per_ij("R3ij", lambda i, j: (dims.m2[i][j], dims.m2[i][j])),
        Rbar3=per_ji("Rbar3", lambda j, i: (dims.m3[j][i], dims.m3[j][i])),
        G1=_entry(p["G1"], (n, n), "problem.G1"),
        G2=per_i("G2", lambda i: (n, n)),
        G3=[_entry(p["G3"][j], (n, n), f"problem.G3[{j}]") for j in range(N_EXECUTIVES)],
        gamma=float(p["gamma"]),
        T=float(p["T"]),
        x0=np.real(_entry(p["x0"], (n,), "problem.x0")),
    )
    return spec


def _read_json(path, what):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {what}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} parse error at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration; unknown keys are
    rejected with the offending path. The problem block may be embedded or
    given as a path to a separate JSON file (relative to the config)."""
    raw = _read_json(path, "config")
    if isinstance(raw, dict) and isinstance(raw.get("problem"), str):
        ppath = Path(path).parent / raw["problem"]
        raw = dict(raw, problem=_read_json(ppath, "problem file"))
    return parse_config(raw)


def parse_config(raw) -> RunConfig:
    _require_keys(raw, allowed=("problem", "grid", "mc", "terminal",
                                "tolerances", "sweeps", "outputs"),
                  required=("problem", "grid", "mc", "terminal"), path="config")
    try:
        spec = _parse_problem(raw["problem"])
    except (TrigameError, ConfigError):
        raise
    except Exception as exc:
        raise ConfigError(f"problem: {exc}") from None

    g = raw["grid"]
    _require_keys(g, allowed=("N", "refinement"), required=("N",), path="grid")
    N = int(g["N"])
    if N < 2:
        raise ConfigError("grid.N: need at least 2 steps")
    refinement = int(g.get("refinement", 1))
    if refinement < 1:
        raise ConfigError("grid.refinement: must be >= 1")

    mc = raw["mc"]
    _require_keys(mc, allowed=("n_paths", "seed"), required=("n_paths", "seed"),
                  path="mc")

    term = raw["terminal"]
    _require_keys(term, allowed=("eta", "zeta", "rho"),
                  required=("eta", "zeta", "rho"), path="terminal")
    d = spec.dims
    eta = [[_entry(term["eta"][i][j], (d.m1[i], d.m2[i][j]),
                   f"terminal.eta[{i}][{j}]", allow_complex=True)
            for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    zeta = [[_entry(term["zeta"][i][j], (d.m1[i], d.m3[j][i]),
                    f"terminal.zeta[{i}][{j}]", allow_complex=True)
             for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]
    rho = [[_entry(term["rho"][i][j], (d.m2[i][j], d.m3[j][i]),
                   f"terminal.rho[{i}][{j}]", allow_complex=True)
            for j in range(N_EXECUTIVES)] for i in range(N_MANAGERS)]

    tol = raw.get("tolerances", {})
    _require_keys(tol, allowed=("matching_tol", "condition_cap", "p_residual_cap"),
                  required=(), path="tolerances")
    sweeps = raw.get("sweeps", {})
    _require_keys(sweeps, allowed=("gamma", "terminal_scale"), required=(),
                  path="sweeps")
    gammas = [float(v) for v in sweeps.get("gamma", [])]
    if any(v <= 0 for v in gammas):
        raise ConfigError("sweeps.gamma: attenuation levels must be positive")
    outputs = raw.get("outputs", {})
    _require_keys(outputs, allowed=("svg",), required=(), path="outputs")

    return RunConfig(
        spec=spec, N=N, refinement=refinement,
        n_paths=int(mc["n_paths"]), seed=int(mc["seed"]),
        terminal_eta=eta, terminal_zeta=zeta, terminal_rho=rho,
        matching_tol=float(tol.get("matching_tol", 1e-8)),
        condition_cap=float(tol.get("condition_cap", 1e8)),
        p_residual_cap=float(tol.get("p_residual_cap", 1e-3)),
        gamma_sweep=gammas,
        terminal_scale_sweep=[float(v) for v in sweeps.get("terminal_scale", [])],
        svg=bool(outputs.get("svg", False)),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# emission helpers
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(c) if not isinstance(c, str) else c
                              for c in row))
    Path(path).write_text("\n".join(lines) + "\n")


def emit_plot(series, kind, path, title="", xlabel="t"):
    """Write one standalone SVG with labeled axes and a legend.

    ``series`` is a list of (label, x, y) triples; empty input is an error.
    Output bytes are deterministic for identical input.
    """
    if not series:
        raise TrigameError("emit_plot: empty series")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "trigame"}):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for label, x, y in series:
            ax.plot(np.asarray(x, float), np.asarray(y, float), label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(kind)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if len(series) > 1:
            ax.legend(fontsize=8, ncol=2)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def _matrix_cols(prefix, arr):
    """Column labels and flattened entries for a (r, c) block."""
    r, c = arr.shape
    if r == 1 and c == 1:
        return [prefix], [arr[0, 0]]
    labels = [f"{prefix}_r{a + 1}c{b + 1}" for a in range(r) for b in range(c)]
    return labels, list(arr.ravel())


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    files: dict = field(default_factory=dict)      # name -> sha256
    timings: dict = field(default_factory=dict)    # stage -> seconds
    summaries: dict = field(default_factory=dict)
    completed: list = field(default_factory=list)

    def record_file(self, path):
        p = Path(path)
        self.files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()

    def save(self, out_dir):
        p = Path(out_dir) / "run_manifest.json"
        p.write_text(json.dumps(
            {"config_hash": self.config_hash, "files": self.files,
             "timings_s": self.timings, "summaries": self.summaries,
             "completed_stages": self.completed}, indent=2, sort_keys=True) + "\n")
        return p


def _solve_all(cfg: RunConfig, spec=None, terminal_scale=1.0, do_level2=True):
    """validate + solve + incentive on one spec; returns a dict of results."""
    spec = spec or cfg.spec
    report = validate_problem(spec)
    if not report.passed:
        raise ConfigError("problem validation failed:\n" + str(report))
    central = assemble_centralized(spec)
    grid = TimeGrid(spec.T, cfg.N)
    P = solve_P(spec, central, grid, cond_cap=cfg.condition_cap)
    team = team_gains(P, spec, central, cond_cap=cfg.condition_cap)
    scfg = SolverConfig(tol=cfg.matching_tol, cond_cap=cfg.condition_cap,
                        seed=cfg.seed)
    s = terminal_scale
    eta_T = [[s * cfg.terminal_eta[i][j] for j in range(N_EXECUTIVES)]
             for i in range(N_MANAGERS)]
    zeta_T = [[s * cfg.terminal_zeta[i][j] for j in range(N_EXECUTIVES)]
              for i in range(N_MANAGERS)]
    level1, rep1 = level1_recursion(spec, team, eta_T, zeta_T, grid, scfg)
    level2 = rep2 = None
    if do_level2:
        level2, rep2 = level2_recursion(spec, team, level1, cfg.terminal_rho,
                                        grid, scfg)
    return dict(spec=spec, central=central, grid=grid, team=team,
                level1=level1, level2=level2, rep1=rep1, rep2=rep2,
                validation=report)


def run_pipeline(config: RunConfig, stages=None, out_dir=".") -> RunManifest:
    """Execute the requested stages in dependency order, emitting artifacts
    into ``out_dir``. A stage failure propagates after the manifest records
    partial completion."""
    want = set(stages or STAGES)
    unknown = want - set(STAGES) - {"sweep"}
    if unknown:
        raise ConfigError(f"unknown stage(s): {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config.config_hash())
    spec = config.spec
    try:
        t0 = time.perf_counter()
        report = validate_problem(spec)
        manifest.timings["validate"] = time.perf_counter() - t0
        manifest.summaries["validation"] = {
            "passed": report.passed,
            "failures": [n for n, _ in report.failures()]}
        if not report.passed:
            raise ConfigError("problem validation failed:\n" + str(report))
        manifest.completed.append("validate")
        if want == {"validate"}:
            manifest.save(out)
            return manifest

        # --- solve ---
        t0 = time.perf_counter()
        central = assemble_centralized(spec)
        grid = TimeGrid(spec.T, config.N)
        P = solve_P(spec, central, grid, cond_cap=config.condition_cap)
        team = team_gains(P, spec, central, cond_cap=config.condition_cap)
        manifest.timings["solve"] = time.perf_counter() - t0
        ts = grid.nodes()

        pcols, _ = _matrix_cols("P", P.values[0])
        rows = [[t] + _matrix_cols("P", P.values[k])[1]
                + [P.cond[k]] for k, t in enumerate(ts)]
        write_csv(out / "p_path.csv", ["t"] + pcols + ["cond"], rows)
        manifest.record_file(out / "p_path.csv")

        header = ["t"]
        for b in central.blocks:
            header += _matrix_cols(b.label + "_gain", team.Kc[0][b.sl])[0]
        rows = []
        for k, t in enumerate(ts):
            row = [t]
            for b in central.blocks:
                row += _matrix_cols("", team.Kc[k][b.sl])[1]
            rows.append(row)
        write_csv(out / "gains.csv", header, rows)
        manifest.record_file(out / "gains.csv")

        vcols, _ = _matrix_cols("v_gain", team.Kv[0])
        write_csv(out / "disturbance_gain.csv", ["t"] + vcols,
                  [[t] + _matrix_cols("", team.Kv[k])[1] for k, t in enumerate(ts)])
        manifest.record_file(out / "disturbance_gain.csv")
        manifest.summaries["solve"] = {
            "P0_trace": float(np.trace(P.values[0])),
            "max_cond": P.max_cond}
        manifest.completed.append("solve")

        results = dict(central=central, grid=grid, team=team,
                       level1=None, level2=None)

        # --- incentive ---
        if want & {"incentive", "simulate", "verify", "sweep"}:
            t0 = time.perf_counter()
            scfg = SolverConfig(tol=config.matching_tol,
                                cond_cap=config.condition_cap, seed=config.seed)
            level1, rep1 = level1_recursion(spec, team, config.terminal_eta,
                                            config.terminal_zeta, grid, scfg)
            level2, rep2 = level2_recursion(spec, team, level1,
                                            config.terminal_rho, grid, scfg)
            manifest.timings["incentive"] = time.perf_counter() - t0
            results.update(level1=level1, level2=level2)
            _emit_incentive_csvs(out, manifest, ts, level1, level2)
            identity = incentive_identity_check(level1, level2, team)
            manifest.summaries["incentive"] = {
                "level1_max_residual": rep1.max_residual,
                "level2_max_residual": rep2.max_residual,
                "level1_max_imag": level1.max_imag(),
                "level2_max_imag": level2.max_imag(),
                "flagged_jumps_level1": len(rep1.flagged_jumps()),
                "flagged_jumps_level2": len(rep2.flagged_jumps()),
                "identity": identity,
            }
            manifest.completed.append("incentive")

        # --- simulate ---
        if want & {"simulate", "verify"}:
            t0 = time.perf_counter()
            sim_grid = TimeGrid(spec.T, config.N * config.refinement)
            if config.refinement == 1:
                noise = sample_brownian(grid, config.n_paths, config.seed)
                traj = simulate_hierarchy(spec, team, results["level1"],
                                          results["level2"], noise, "incentive")
                team_traj = simulate_hierarchy(spec, team, noise=noise, mode="team")
            else:
                # gains held per coarse node on the refined grid
                rep = config.refinement
                noise = sample_brownian(sim_grid, config.n_paths, config.seed)
                idx = np.repeat(np.arange(config.N + 1), rep)[:sim_grid.N + 1]
                team_traj = simulate_closed_loop(team.a[idx], team.b[idx],
                                                 spec.x0, noise,
                                                 -team.Kc[idx], team.Kv[idx])
                traj = team_traj
            costs = estimate_costs(team_traj, spec, central)
            X = second_moment(team.a, team.b, spec.x0, grid)
            ana = analytic_costs(team, X, spec)
            manifest.timings["simulate"] = time.perf_counter() - t0

            mean = team_traj.states.mean(axis=0)
            std = team_traj.states.std(axis=0)
            dev = float(np.max(np.abs(traj.states - team_traj.states)))
            sts = sim_grid.nodes() if config.refinement > 1 else ts
            header = ["t"] + [f"x{c + 1}_mean" for c in range(spec.dims.n)] \
                + [f"x{c + 1}_std" for c in range(spec.dims.n)]
            write_csv(out / "trajectories.csv", header,
                      [[t] + list(mean[k]) + list(std[k]) for k, t in enumerate(sts)])
            manifest.record_file(out / "trajectories.csv")

            body = [[name, m, se] for name, (m, se) in costs.estimates.items()]
            body.append(["J1_analytic", ana.J1_star, 0.0])
            body.append(["Jv_analytic", ana.Jv_star, 0.0])
            write_csv(out / "costs.csv", ["metric", "estimate", "std_error"],
                      body)
            manifest.record_file(out / "costs.csv")
            manifest.summaries["simulate"] = {
                "J1_mc": costs.mean("J1"), "J1_analytic": ana.J1_star,
                "Jv_mc": costs.mean("Jv"), "Jv_analytic": ana.Jv_star,
                "n_paths": config.n_paths,
                "incentive_vs_team_max_dev": dev,
            }
            manifest.completed.append("simulate")

        # --- verify ---
        if "verify" in want:
            t0 = time.perf_counter()
            vcfg = VerifyConfig(p_residual_cap=config.p_residual_cap,
                                seed=config.seed,
                                nash_paths=min(config.n_paths, 20000))
            vrep = run_verification(spec, team, results["level1"],
                                    results["level2"], vcfg)
            manifest.timings["verify"] = time.perf_counter() - t0
            write_csv(out / "verify.csv", ["check", "passed", "detail"],
                      [[n, "1" if ok else "0", f'"{d}"'] for n, ok, d in vrep.checks])
            manifest.record_file(out / "verify.csv")
            manifest.summaries["verify"] = {
                "passed": vrep.passed,
                "residual_P": vrep.residual_P,
                "hinf_max_ratio": vrep.hinf_max_ratio,
                "nash_u_rate": vrep.nash.u_pass_rate,
                "nash_v_rate": vrep.nash.v_pass_rate,
            }
            manifest.completed.append("verify")
            if not vrep.passed:
                raise VerificationFailure("verification failed:\n" + str(vrep))

        # --- sweep ---
        if "sweep" in want:
            t0 = time.perf_counter()
            _run_sweeps(config, out, manifest, ts)
            manifest.timings["sweep"] = time.perf_counter() - t0
            manifest.completed.append("sweep")

        if config.svg:
            _emit_svgs(config, out, manifest, results, ts)
    finally:
        manifest.save(out)
    return manifest


def _emit_incentive_csvs(out, manifest, ts, level1, level2):
    def param_cols(name, block_arr, i, j, k):
        labels, vals = _matrix_cols(f"{name}_{i + 1}_{j + 1}", block_arr[k])
        cols, nums = [], []
        for lab, v in zip(labels, vals):
            cols += [f"{lab}_re", f"{lab}_im", f"{lab}_mod"]
            nums += [v.real, v.imag, abs(v)]
        return cols, nums

    for fname, params in (("incentive_level1.csv",
                           [("eta", level1.eta), ("zeta", level1.zeta),
                            ("xi", level1.xi)]),
                          ("incentive_level2.csv",
                           [("theta", level2.theta), ("rho", level2.rho)])):
        header = ["t"]
        for name, blocks in params:
            for i in range(N_MANAGERS):
                for j in range(N_EXECUTIVES):
                    header += param_cols(name, blocks[i][j], i, j, 0)[0]
        rows = []
        for k, t in enumerate(ts):
            row = [t]
            for name, blocks in params:
                for i in range(N_MANAGERS):
                    for j in range(N_EXECUTIVES):
                        row += param_cols(name, blocks[i][j], i, j, k)[1]
            rows.append(row)
        write_csv(out / fname, header, rows)
        manifest.record_file(out / fname)


def _run_sweeps(config: RunConfig, out, manifest, ts):
    spec = config.spec
    if config.gamma_sweep:
        series = []
        sups = {}
        for gam in config.gamma_sweep:
            sp = _respec_gamma(spec, gam)
            central = assemble_centralized(sp)
            grid = TimeGrid(sp.T, config.N)
            P = solve_P(sp, central, grid, cond_cap=config.condition_cap)
            team = team_gains(P, sp, central, cond_cap=config.condition_cap)
            mag = np.linalg.norm(team.Kv, axis=(1, 2))
            series.append((gam, mag))
            sups[str(gam)] = float(mag.max())
        header = ["t"] + [f"v_gain_mag_gamma_{g}" for g, _ in series]
        write_csv(out / "gamma_sweep.csv", header,
                  [[t] + [s[1][k] for s in series] for k, t in enumerate(ts)])
        manifest.record_file(out / "gamma_sweep.csv")
        manifest.summaries["gamma_sweep"] = {
            "sup_disturbance_gain": sups,
            "strictly_decreasing": all(
                sups[str(a)] > sups[str(b)]
                for a, b in zip(config.gamma_sweep, config.gamma_sweep[1:]))}
        if config.svg:
            emit_plot([(f"gamma={g}", ts, m) for g, m in series],
                      "disturbance gain magnitude", out / "gamma_sweep.svg")
            manifest.record_file(out / "gamma_sweep.svg")

    if config.terminal_scale_sweep:
        medians = {}
        mods = {}
        for s in config.terminal_scale_sweep:
            res = _solve_all(config, terminal_scale=s, do_level2=False)
            l1 = res["level1"]
            mod = []
            for i in range(N_MANAGERS):
                for j in range(N_EXECUTIVES):
                    mod.append(np.abs(l1.eta[i][j][:, 0, 0]))
                    mod.append(np.abs(l1.zeta[i][j][:, 0, 0]))
            mods[s] = np.array(mod)   # (12, N+1) for scalar specs
            cut = int(0.9 * config.N)
            medians[str(s)] = float(np.median(mods[s][:, :cut + 1]))
        write_csv(out / "terminal_scale_sweep.csv",
                  ["terminal_scale", "median_modulus_to_09T"],
                  [[str(s), medians[str(s)]] for s in config.terminal_scale_sweep])
        manifest.record_file(out / "terminal_scale_sweep.csv")
        manifest.summaries["terminal_scale_sweep"] = medians


def _respec_gamma(spec: ProblemSpec, gamma):
    import copy
    sp = copy.copy(spec)
    sp.gamma = float(gamma)
    return sp


def _emit_svgs(config, out, manifest, results, ts):
    team = results["team"]
    spec = config.spec
    noise = sample_brownian(results["grid"], min(config.n_paths, 2000), config.seed)
    traj = simulate_hierarchy(spec, team, noise=noise, mode="team")
    mean = traj.states.mean(axis=0)[:, 0]
    std = traj.states.std(axis=0)[:, 0]
    emit_plot([("mean state", ts, mean),
               ("mean + std", ts, mean + std),
               ("mean - std", ts, mean - std)],
              "state", out / "state_trajectory.svg")
    manifest.record_file(out / "state_trajectory.svg")

    series = [(b.label, ts, np.linalg.norm(team.Kc[:, b.sl, :], axis=(1, 2)))
              for b in results["central"].blocks]
    emit_plot(series, "team strategy gain magnitude", out / "team_strategy.svg")
    manifest.record_file(out / "team_strategy.svg")

    emit_plot([("disturbance gain", ts, np.linalg.norm(team.Kv, axis=(1, 2)))],
              "worst-case disturbance gain", out / "worst_case_disturbance.svg")
    manifest.record_file(out / "worst_case_disturbance.svg")

    if results["level1"] is not None:
        l1 = results["level1"]
        for name, blocks in (("eta", l1.eta), ("zeta", l1.zeta), ("xi", l1.xi)):
            series = []
            for i in range(N_MANAGERS):
                for j in range(N_EXECUTIVES):
                    series.append((f"{name}_{i + 1}{j + 1}", ts,
                                   np.abs(blocks[i][j]).max(axis=(1, 2))))
            emit_plot(series, f"|{name}|", out / f"level1_{name}_moduli.svg")
            manifest.record_file(out / f"level1_{name}_moduli.svg")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="trigame",
        description="Three-level incentive hierarchy solver with "
                    "disturbance attenuation")
    ap.add_argument("verb", choices=list(STAGES) + ["all", "sweep"],
                    help="pipeline stage to run (each implies its prerequisites)")
    ap.add_argument("--config", required=True, help="path to a JSON run config")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override mc.seed")
    ap.add_argument("--paths", type=int, default=None, help="override mc.n_paths")
    ap.add_argument("--grid", type=int, default=None, help="override grid.N")
    ap.add_argument("--svg", action="store_true", help="emit SVG plots")
    ap.add_argument("--gamma-list", default=None,
                    help="comma-separated attenuation levels for the sweep")
    ap.add_argument("--terminal-scale", type=float, default=None,
                    help="scale factor on the terminal parameter magnitudes")
    return ap


_VERB_STAGES = {
    "validate": {"validate"},
    "solve": {"validate", "solve"},
    "incentive": {"validate", "solve", "incentive"},
    "simulate": {"validate", "solve", "incentive", "simulate"},
    "verify": {"validate", "solve", "incentive", "simulate", "verify"},
    "all": set(STAGES) | {"sweep"},
    "sweep": {"validate", "solve", "sweep"},
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        # overrides also land in the raw dict so the config hash reflects
        # the effective run
        if args.seed is not None:
            config.seed = args.seed
            config.raw.setdefault("mc", {})["seed"] = args.seed
        if args.paths is not None:
            config.n_paths = args.paths
            config.raw.setdefault("mc", {})["n_paths"] = args.paths
        if args.grid is not None:
            config.N = args.grid
            config.raw.setdefault("grid", {})["N"] = args.grid
        if args.svg:
            config.svg = True
            config.raw.setdefault("outputs", {})["svg"] = True
        if args.gamma_list:
            config.gamma_sweep = [float(v) for v in args.gamma_list.split(",")]
            if any(v <= 0 for v in config.gamma_sweep):
                raise ConfigError("--gamma-list: levels must be positive")
            config.raw.setdefault("sweeps", {})["gamma"] = config.gamma_sweep
        if args.terminal_scale is not None:
            config.terminal_scale_sweep = [1.0, args.terminal_scale]
            config.raw.setdefault("sweeps", {})["terminal_scale"] = \
                config.terminal_scale_sweep
        manifest = run_pipeline(config, _VERB_STAGES[args.verb], args.out)
        print(json.dumps({"completed": manifest.completed,
                          "config_hash": manifest.config_hash,
                          "summaries": manifest.summaries}, indent=2,
                         sort_keys=True, default=str))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, InvertibilityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except MatchingError as exc:
        print(f"matching error: {exc}", file=sys.stderr)
        return 4
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
