"""Seeded experiment pipelines that emit the figure CSVs.

Every writer uses fixed float formatting and no timestamps, so a rerun with
the same configuration reproduces every file byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bankruptcy as bk
from . import funnel as fn
from . import fuzzy as fz
from . import kuramoto as ku
from . import mfg
from . import nested as ns
from .errors import InfoGamesError, ValidationError
from .prob import JointPmf, Pmf, entropy, mutual_information

FLOAT = "{:.10g}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT.format(float(v))
    return str(v)


def write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def parallel_map(fn_: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map over a bounded process pool (serial when ``workers <= 1``)."""
    if workers <= 1 or len(items) < 2:
        return [fn_(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn_, items))


# --------------------------------------------------------------------------
# data generation


def gen_bernoulli_source(p: float, n: int, seed: int, flip: float = 0.1, path=None):
    """Seeded Bernoulli pairs ``(S, X)`` with ``S ~ Bern(p)`` and ``X = S xor Bern(flip)``.

    ``flip`` sets the correlation: 0 copies ``S``, 0.5 makes ``X`` independent.

    Returns
    -------
    samples : ndarray (n, 2) of int
    joint : JointPmf
        Empirical law, rows indexed by ``S`` and columns by ``X``.
    """
    if not 0.0 <= p <= 1.0 or not 0.0 <= flip <= 1.0:
        raise ValidationError("p and flip must lie in [0, 1]")
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < p).astype(int)
    x = s ^ (rng.random(n) < flip).astype(int)
    counts = np.zeros((2, 2))
    np.add.at(counts, (s, x), 1.0)
    if path is not None:
        write_rows(path, ["s", "x"], zip(s, x))
    return np.column_stack([s, x]), JointPmf(counts / n)


def _random_binary_joint(rng) -> np.ndarray:
    return rng.dirichlet(np.ones(4)).reshape(2, 2)


# --------------------------------------------------------------------------
# binary channel oracle


def _mi_batch(pxy: np.ndarray) -> np.ndarray:
    px = pxy.sum(-1, keepdims=True)
    py = pxy.sum(-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(pxy > 0, pxy * np.log2(pxy / (px * py)), 0.0)
    return t.sum((-1, -2))


def _binary_channels(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.stack([np.stack([a, 1 - a], -1), np.stack([b, 1 - b], -1)], -2)


def channel_grid_optimum(prob: fn.FunnelProblem, step: float = 0.005) -> float:
    """Smallest feasible leakage over 2x2 channels on a grid, refined on the
    constraint boundary by bisection along every grid line."""
    if prob.p_sx.shape[1] != 2 or prob.y_size != 2:
        raise ValidationError("the grid oracle covers binary X and Y only")
    p_sx = prob.p_sx.probs
    px = p_sx.sum(axis=0)
    i_sx = mutual_information(prob.p_sx)

    def evaluate(a, b):
        W = _binary_channels(a, b)
        util = _mi_batch(px[:, None] * W)
        leak = _mi_batch(np.einsum("sx,...xy->...sy", p_sx, W))
        slack = util - prob.bound if prob.mode is fn.UtilityMode.RATE else prob.bound - (i_sx - leak)
        return leak, slack

    g = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    A, B = np.meshgrid(g, g, indexing="ij")
    leak, slack = evaluate(A, B)
    best = float(np.where(slack >= -1e-12, leak, np.inf).min())
    for swap in (False, True):
        S = slack.T if swap else slack
        rows, cols = np.nonzero((S[:, :-1] < 0) != (S[:, 1:] < 0))
        if rows.size == 0:
            continue
        fixed = g[rows]
        lo, hi = g[cols], g[cols + 1]
        lo_neg = S[rows, cols] < 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            _, sm = evaluate(mid, fixed) if swap else evaluate(fixed, mid)
            neg = sm < 0
            move_lo = neg == lo_neg
            lo = np.where(move_lo, mid, lo)
            hi = np.where(move_lo, hi, mid)
        feas_pt = np.where(lo_neg, hi, lo)
        lk, sm = evaluate(feas_pt, fixed) if swap else evaluate(fixed, feas_pt)
        ok = sm >= -1e-12
        if ok.any():
            best = min(best, float(lk[ok].min()))
    return best


# --------------------------------------------------------------------------
# mean-field instance


def mfg_instance(seed: int, alpha: float = 1.0, n: int = 21, i_max: float | None = None):
    """Seeded 1-d quadratic-cost instance on ``[0, I(S;X)]``.

    The default state range is ``I(S;X)`` of a uniform bit observed through a
    binary symmetric channel with crossover 0.1.
    """
    if i_max is None:
        i_max = 1.0 - entropy(Pmf(np.array([0.1, 0.9])))
    rng = np.random.default_rng(seed)
    grid = mfg.MfgGrid.uniform(n, i_max, dt=0.002, horizon=0.5, sigma=0.1, alpha=alpha)
    x = grid.axes[0]
    target = rng.uniform(0.1, 0.4)
    center = rng.uniform(0.2, 0.8) * i_max
    coupling = rng.uniform(1.0, 4.0)
    m0 = np.exp(-0.5 * ((x - center) / 0.05) ** 2)
    m0 /= m0.sum()
    prob = mfg.MfgProblem(
        mfg.LinearDrift(0.5, 0.5, -1.0),
        mfg.QuadraticCost(q=2.0, target=target, r=1.0, coupling=coupling),
        np.linspace(0.0, 1.0, 21),
    )
    return prob, grid, m0


def _mfg_sweeps(args) -> tuple[int, bool]:
    seed, alpha, tol, max_iter = args
    prob, grid, m0 = mfg_instance(seed, alpha)
    sol = mfg.solve_mfg(prob, grid, m0, tol=tol, max_sweeps=max_iter)
    return sol.sweeps, sol.converged


# --------------------------------------------------------------------------
# pipelines


@dataclass
class RunConfig:
    seed: int = 0
    out: Path = Path("out")
    seeds: int = 50
    alphas: list[float] = field(default_factory=lambda: [1.0, 0.8, 0.6])
    lambdas: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5])
    bounds: int = 10
    grid: int = 21
    max_iter: int | None = None
    tol: float | None = None
    estate: float | None = None
    claims: list[float] | None = None
    sizes: list[int] = field(default_factory=lambda: [4, 8, 16, 32, 64])
    workers: int = 1
    coupling: float = 1.0
    horizon: int = 60
    clusters: int = 2


def _funnel_instance(seed: int):
    rng = np.random.default_rng(seed)
    p_sx = JointPmf(_random_binary_joint(rng))
    h_x = entropy(p_sx.marginal_b())
    R = rng.uniform(0.1, 0.9) * h_x
    return fn.FunnelProblem(p_sx, 2, fn.UtilityMode.RATE, R)


def _funnel_pair(args):
    seed, tol, max_iter = args
    prob = _funnel_instance(seed)
    s = fn.solve_funnel(prob, seed, tol=tol, max_iter=max_iter)
    g = fn.greedy_baseline(prob, tol=tol, init=seed)
    return s.iterations, g.iterations


def _cdf_rows(label, runs):
    x = np.sort(np.asarray(runs))
    return [(*label, int(v), (i + 1) / x.size) for i, v in enumerate(x)]


def run_funnel(cfg: RunConfig) -> list[Path]:
    """fig1a (iteration CDFs), fig1b (trade-off curve) and fig1c (loss traces)."""
    tol = cfg.tol or 1e-7
    max_iter = cfg.max_iter or 2000
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
    pairs = parallel_map(_funnel_pair, [(s, tol, max_iter) for s in seeds], cfg.workers)
    rows = _cdf_rows(("funnel-solver", "-"), [p[0] for p in pairs])
    rows += _cdf_rows(("greedy", "-"), [p[1] for p in pairs])
    for a in cfg.alphas:
        res = parallel_map(_mfg_sweeps, [(s, a, 1e-6, 300) for s in seeds], cfg.workers)
        rows += _cdf_rows(("mfg", FLOAT.format(a)), [r[0] for r in res])
    out = [write_rows(cfg.out / "fig1a.csv", ["algorithm", "alpha", "iterations", "cdf"], rows)]

    # trade-off curve on a Bernoulli source
    _, joint = gen_bernoulli_source(0.5, 100_000, cfg.seed, flip=0.1)
    h_x = entropy(joint.marginal_b())
    bounds = list(np.linspace(0.0, h_x, cfg.bounds))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = fn.tradeoff_sweep(joint, 2, bounds, tol=tol, max_iter=max_iter, seed=cfg.seed)
    out.append(write_rows(
        cfg.out / "fig1b.csv",
        ["bound_over_hx", "leakage_bits", "utility_over_hx"],
        [(b / h_x, lk, ut / h_x) for b, lk, ut in curve],
    ))

    # loss against the grid oracle along each run
    prob = _funnel_instance(cfg.seed)
    oracle = channel_grid_optimum(prob)
    rows = []
    for name, sol in (
        ("funnel-solver", fn.solve_funnel(prob, cfg.seed, tol=tol, max_iter=max_iter)),
        ("greedy", fn.greedy_baseline(prob, tol=tol, init=cfg.seed)),
    ):
        n = len(sol.trace)
        for k, (lk, _) in enumerate(sol.trace, start=1):
            loss = 100.0 * (lk - oracle) / oracle if oracle > 0 else 0.0
            rows.append((name, k / n, loss))
    out.append(write_rows(cfg.out / "fig1c.csv", ["algorithm", "normalised_iteration", "loss_percent"], rows))
    return out


def run_mfg(cfg: RunConfig) -> list[Path]:
    alpha = cfg.alphas[0]
    prob, grid, m0 = mfg_instance(cfg.seed, alpha, n=cfg.grid)
    sol = mfg.solve_mfg(prob, grid, m0, tol=cfg.tol or 1e-6, max_sweeps=cfg.max_iter or 300)
    paths = sol.write_fields(cfg.out, grid)
    mean = sol.mean_trajectory(grid)
    paths.append(write_rows(
        cfg.out / "mfg_mean.csv", ["t", "mean_state_bits"],
        [(k * grid.dt, m) for k, m in enumerate(mean)],
    ))
    if not sol.converged:
        raise InfoGamesError(f"mean-field solve did not converge in {sol.sweeps} sweeps")
    return paths


def run_bankruptcy(cfg: RunConfig) -> list[Path]:
    if cfg.estate is None or cfg.claims is None:
        raise ValidationError("bankruptcy needs --estate and --claims")
    inst = bk.BankruptcyInstance(cfg.estate, np.array(cfg.claims, dtype=float))
    alloc = bk.shapley(inst, seed=cfg.seed)
    path = cfg.out / "allocation.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    bk.write_report(path, inst, alloc)
    return [path]


def _nested_run(args):
    seed, lam, horizon = args
    cfg = ns.NestedConfig(lam=lam, horizon=horizon)
    inst = ns.draw_instance(cfg, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = ns.solve_bilevel_admm(cfg, inst, seed)
        t = ns.solve_trilevel_kuramoto(cfg, inst, seed=seed).mfg
    return [
        ("bilevel-admm", seed, lam, b.iterations, b.converged, b.residuals[-1], b.ops.linear, b.ops.sort, b.ops.pairwise),
        ("trilevel-kuramoto", seed, lam, t.iterations, t.converged, t.residuals[-1], t.ops.linear, t.ops.sort, t.ops.pairwise),
    ]


def _size_run(args):
    n, seed = args
    cfg = ns.NestedConfig(n_bobs=n + 4, coalition=n)
    inst = ns.draw_instance(cfg, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = ns.solve_bilevel_admm(cfg, inst, seed)
        t = ns.solve_trilevel_kuramoto(cfg, inst, seed=seed).mfg
    return n, seed, b.ops_per_iteration, t.ops_per_iteration


def run_nested(cfg: RunConfig) -> list[Path]:
    """fig2 (iteration CDF per dissatisfaction rate) and fig3 (op counts)."""
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
    jobs = [(s, lam, cfg.horizon) for lam in cfg.lambdas for s in seeds]
    records = [r for pair in parallel_map(_nested_run, jobs, cfg.workers) for r in pair]
    out = [write_rows(
        cfg.out / "nested_runs.csv",
        ["algorithm", "seed", "lambda", "iterations", "converged", "residual_nats",
         "linear_ops", "sort_ops", "pairwise_ops"],
        records,
    )]
    rows = []
    for alg in ("bilevel-admm", "trilevel-kuramoto"):
        for lam in cfg.lambdas:
            its = [r[3] for r in records if r[0] == alg and r[2] == lam]
            rows += _cdf_rows((alg, FLOAT.format(lam)), its)
    out.append(write_rows(cfg.out / "fig2.csv", ["algorithm", "lambda", "iterations", "cdf"], rows))

    sizes = parallel_map(_size_run, [(n, cfg.seed) for n in cfg.sizes], cfg.workers)
    rows = []
    for n, _, b_ops, t_ops in sizes:
        for alg, ops in (("bilevel-admm", b_ops), ("trilevel-kuramoto", t_ops)):
            for k, c in enumerate(np.cumsum(ops), start=1):
                rows.append((alg, n, k, c))
    out.append(write_rows(cfg.out / "fig3.csv", ["algorithm", "n_players", "iteration", "cumulative_ops"], rows))
    fits = []
    for idx, alg in ((2, "bilevel-admm"), (3, "trilevel-kuramoto")):
        fit = ns.complexity_counters([(r[0], max(r[idx])) for r in sizes])
        fits.append((alg, fit.linear, fit.nlogn, fit.quadratic, fit.r2, fit.residual))
    out.append(write_rows(
        cfg.out / "fig3_fit.csv",
        ["algorithm", "coef_n", "coef_nlogn", "coef_n2", "r2", "rms_residual_ops"],
        fits,
    ))
    return out


def run_kuramoto(cfg: RunConfig) -> list[Path]:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.grid if cfg.grid else 10
    state = ku.OscillatorState(rng.uniform(0, 2 * np.pi, n), rng.normal(0.0, 0.1, n), cfg.coupling)
    dt = min(0.1, 0.1 / abs(cfg.coupling)) if cfg.coupling else 0.1
    steps = cfg.max_iter or 500
    traj = ku.integrate(state, dt, steps)
    path = cfg.out / "kuramoto.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    ku.write_trajectory(path, traj, dt)
    return [path]


def run_fuzzy(cfg: RunConfig) -> list[Path]:
    rng = np.random.default_rng(cfg.seed)
    n_pts = max(cfg.grid, 3)
    data = rng.dirichlet(np.ones(4), size=n_pts)
    inst = fz.FuzzyInstance(data, cfg.clusters)
    res = fz.fit(inst, tol=cfg.tol or 1e-10, max_iter=cfg.max_iter or 500, seed=cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_rows(cfg.out / "fuzzy_data.csv", [f"s_{i}" for i in range(data.shape[1])], data)
    fz.write_state(cfg.out / "fuzzy_state.csv", res.state)
    write_rows(cfg.out / "fuzzy_trace.csv", ["iter", "objective_nats"], enumerate(res.trace))
    return [cfg.out / "fuzzy_data.csv", cfg.out / "fuzzy_state.csv", cfg.out / "fuzzy_trace.csv"]


# coverage of the modelled items, one row per formulation element
COVERAGE = [
    ("leakage minimisation under a utility constraint", "funnel", "FunnelProblem, solve_funnel"),
    ("distortion as an information gap and as expected posterior divergence", "prob", "distortion_gap, expected_posterior_kl"),
    ("fractional time derivative", "fractional", "frac_derivative, gamma_fn"),
    ("fractional gradient operator", "fractional", "frac_gradient"),
    ("informative-agent (header) selection diagnostic", "funnel", "header_rows"),
    ("control laws and value functions of each side", "mfg", "LinearDrift, TanhDrift, QuadraticCost, hamiltonian"),
    ("backward value equation", "mfg", "hjb_backward_step"),
    ("forward density equation", "mfg", "fpk_forward_step"),
    ("exponential row update with normalisation", "funnel", "_agent_step"),
    ("joint two-dimensional min-max game", "mfg", "solve_mfg (Mode.JOINT_MINIMAX)"),
    ("non-zero value sum", "mfg", "value_sum_nonzero"),
    ("saddle condition", "mfg", "saddle_check"),
    ("discounted stability criterion", "mfg", "stability_criterion"),
    ("per-agent messaging over the shared posterior", "funnel", "_header_stats"),
    ("federated alternating solver", "funnel", "solve_funnel"),
    ("greedy baseline", "funnel", "greedy_baseline"),
    ("fuzzy divergence clustering objective", "fuzzy", "objective, fit, penalized_objective"),
    ("coalition worth and Shapley allocation", "bankruptcy", "psi, shapley, validate_allocation"),
    ("bankruptcy event probability", "bankruptcy", "bankruptcy_event_probability"),
    ("bilevel discrete mean-field game with consensus ADMM", "nested", "solve_bilevel_admm"),
    ("trilevel game with Kuramoto phase coupling", "nested", "solve_trilevel_kuramoto, phase_game"),
    ("Kuramoto phase law", "kuramoto", "step, integrate, order_parameter"),
    ("complexity orders of the two schemes", "nested", "complexity_counters"),
    ("iteration CDF and dissatisfaction-rate experiments", "experiments", "run_funnel, run_nested, iteration_cdf"),
    ("Bernoulli data generation", "experiments", "gen_bernoulli_source"),
]


def run_report(cfg: RunConfig) -> list[Path]:
    return [write_rows(cfg.out / "coverage.csv", ["item", "module", "operation"], COVERAGE)]


PIPELINES = {
    "funnel": run_funnel,
    "mfg": run_mfg,
    "bankruptcy": run_bankruptcy,
    "nested": run_nested,
    "kuramoto": run_kuramoto,
    "fuzzy": run_fuzzy,
    "report": run_report,
}


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, paths: Sequence[Path], status: str) -> Path:
    rows = [(Path(p).relative_to(out).as_posix(), sha256(p), Path(p).stat().st_size) for p in sorted(set(map(Path, paths)))]
    rows.append(("status", status, 0))
    return write_rows(out / "manifest.csv", ["file", "sha256", "bytes"], rows)


def _existing(out: Path) -> list[Path]:
    return [p for p in out.rglob("*.csv") if p.name != "manifest.csv"]


def run(command: str, cfg: RunConfig) -> tuple[int, Path]:
    """Execute a pipeline and write the manifest; returns (exit status, manifest)."""
    if command not in PIPELINES:
        raise ValidationError(f"unknown command {command!r}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        paths = PIPELINES[command](cfg)
    except Exception as exc:  # any pipeline fault ends in a partial manifest
        manifest = write_manifest(cfg.out, _existing(cfg.out), f"failed: {type(exc).__name__}: {exc}")
        return 1, manifest
    return 0, write_manifest(cfg.out, paths, "ok")
