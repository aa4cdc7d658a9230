"""Batch experiments: config loading, tuned runs, aggregation, CSV and SVG output."""

import csv
import dataclasses
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import BilinearEnvironment, derive_rng, generate_sphere_arms, make_low_rank_theta
from .errors import BanditError, ConfigError
from .estr import EstrConfig, run_estr, run_isse, run_oful_baseline

log = logging.getLogger(__name__)

METHODS = ("oful", "estr-os", "estr-bm", "isse")
DEFAULT_C_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)
DEFAULT_T1_GRID = (256, 512, 1024, 2048, 4096)
MAX_FAILURE_RATE = 0.10


class ExperimentFailure(BanditError):
    pass


@dataclass
class ExperimentConfig:
    d1: int = 8
    d2: int = 8
    r: int = 1
    sigma: float = 0.01
    n_arms_left: int = 16
    n_arms_right: int = 16
    T: int = 10_000
    reps: int = 60
    seed: int = 0
    lam: float = 1.0
    delta: float = 0.05
    theta_norm: float = 1.0
    methods: tuple = METHODS
    c: float = 1.0
    T1: int | None = None
    tune: bool = False
    c_grid: tuple | dict | None = None
    T1_grid: tuple | None = None
    gamma_mode: str = "simplified-sec6"
    noise: str = "gaussian"
    log_stride: int = 10
    log_dense_until: int = 100
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        for name in ("d1", "d2", "r", "n_arms_left", "n_arms_right", "T", "reps", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(name, f"expected an integer, got {value!r}")
            if value < 1:
                raise ConfigError(name, f"must be >= 1, got {value}")
        if self.r > min(self.d1, self.d2):
            raise ConfigError("r", "rank exceeds a dimension")
        if self.n_arms_left < self.d1:
            raise ConfigError("n_arms_left", "need at least d1 arms")
        if self.n_arms_right < self.d2:
            raise ConfigError("n_arms_right", "need at least d2 arms")
        if self.T < 2:
            raise ConfigError("T", "must be >= 2")
        for name in ("sigma", "lam", "theta_norm", "c"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ConfigError(name, f"expected a nonnegative number, got {value!r}")
        if self.lam == 0 or self.theta_norm == 0:
            raise ConfigError("lam" if self.lam == 0 else "theta_norm", "must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("methods", "method list is empty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError("methods", f"unknown method {m!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods", "duplicate method")
        if self.T1 is not None and not 1 <= self.T1 < self.T:
            raise ConfigError("T1", "need 1 <= T1 < T")
        if isinstance(self.c_grid, dict):
            self.c_grid = {k: _grid("c_grid", v) for k, v in self.c_grid.items()}
        elif self.c_grid is not None:
            self.c_grid = _grid("c_grid", self.c_grid)
        if self.T1_grid is not None:
            self.T1_grid = _grid("T1_grid", self.T1_grid)
            if any(int(t) != t or not 1 <= t < self.T for t in self.T1_grid):
                raise ConfigError("T1_grid", "entries must be integers in [1, T)")
            self.T1_grid = tuple(int(t) for t in self.T1_grid)
        if self.gamma_mode not in ("simplified-sec6", "paper-eq11"):
            raise ConfigError("gamma_mode", f"unknown mode {self.gamma_mode!r}")
        if self.noise not in ("gaussian", "rademacher"):
            raise ConfigError("noise", f"unknown noise {self.noise!r}")
        if self.log_stride < 1 or self.log_dense_until < 0:
            raise ConfigError("log_stride", "stride must be >= 1")

    def c_values(self, method):
        grid = self.c_grid
        if isinstance(grid, dict):
            grid = grid.get(method)
        if grid is None:
            grid = DEFAULT_C_GRID if self.tune else (self.c,)
        return tuple(grid)

    def T1_values(self, method):
        if not method.startswith("estr"):
            return (None,)
        if self.T1_grid is not None:
            return self.T1_grid
        return DEFAULT_T1_GRID if self.tune else (self.T1,)

    def grid_points(self, method):
        return list(itertools.product(self.c_values(method), self.T1_values(method)))


def _grid(name, values):
    if isinstance(values, (int, float)):
        values = [values]
    values = tuple(values)
    if not values:
        raise ConfigError(name, "grid is empty")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(name, f"bad grid value {v!r}")
    return values


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in data:
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
    data = dict(data)
    if "methods" in data and isinstance(data["methods"], str):
        data["methods"] = [m.strip() for m in data["methods"].split(",") if m.strip()]
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from exc


def load_config(path):
    """Read a JSON config; an empty file gives the default protocol."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return ExperimentConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<parse>", str(exc)) from exc
    return config_from_dict(data)


def dump_config(config):
    data = dataclasses.asdict(config)
    data["methods"] = list(config.methods)
    for key in ("c_grid", "T1_grid"):
        if isinstance(data[key], tuple):
            data[key] = list(data[key])
        elif isinstance(data[key], dict):
            data[key] = {k: list(v) for k, v in data[key].items()}
    return data


# -- execution ----------------------------------------------------------------


def make_instance(config, rep):
    """Environment and arm sets for repetition ``rep``; shared by every method."""
    rng = derive_rng(config.seed, "env", rep)
    X = generate_sphere_arms(config.n_arms_left, config.d1, rng)
    Z = generate_sphere_arms(config.n_arms_right, config.d2, rng)
    theta = make_low_rank_theta(config.d1, config.d2, config.r, config.theta_norm, rng)
    env = BilinearEnvironment(theta, config.sigma, config.r, noise=config.noise)
    return env, X, Z


def run_rng(config, method, rep, c, T1):
    """Noise/selection stream for one (method, rep, grid point)."""
    return derive_rng(config.seed, method, rep, round(c * 1_000_000), T1 or 0)


def estr_config(config, env, method, c, T1):
    return EstrConfig(
        T=config.T,
        S_F=env.S_F,
        S_2=env.S_2,
        S_r=env.s_r,
        r=config.r,
        T1=T1,
        lam=config.lam,
        delta=config.delta,
        c=c,
        gamma_mode=config.gamma_mode,
        completion_method="optspace-style" if method == "estr-os" else "burer-monteiro",
    )


RUNNERS = {
    "oful": run_oful_baseline,
    "estr-os": run_estr,
    "estr-bm": run_estr,
    "isse": run_isse,
}


def run_one(config, method, rep, c, T1, track=False):
    env, X, Z = make_instance(config, rep)
    cfg = estr_config(config, env, method, c, T1)
    trace = RUNNERS[method](env, X, Z, cfg, run_rng(config, method, rep, c, T1), track=track)
    trace.method = method
    return trace


def _task(args):
    config, method, rep, c, T1 = args
    started = time.perf_counter()
    try:
        inst, err = run_one(config, method, rep, c, T1).instantaneous, None
    except (BanditError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        inst, err = None, f"{type(exc).__name__}: {exc}"
    return inst, err, time.perf_counter() - started


@dataclass
class MethodResult:
    method: str
    chosen: dict
    traces: np.ndarray  # reps x T instantaneous regret, chosen grid point
    reps: list  # repetition index of each row in ``traces``
    grid: list = field(default_factory=list)  # (c, T1, mean final regret, n_ok)
    failures: list = field(default_factory=list)
    wall_clock: float = 0.0  # summed run time over the grid, in seconds

    @property
    def cumulative(self):
        return np.cumsum(self.traces, axis=1)

    @property
    def mean(self):
        return self.cumulative.mean(axis=0)

    @property
    def half_width(self):
        return band_half_width(self.cumulative)


@dataclass
class AggregateResult:
    config: ExperimentConfig
    methods: dict  # name -> MethodResult, in config order

    def curves(self):
        t = np.arange(1, self.config.T + 1)
        return {m: (t, r.mean, r.half_width) for m, r in self.methods.items()}

    def summary(self):
        out = {}
        for m, r in self.methods.items():
            out[m] = {
                "chosen": r.chosen,
                "final_mean": float(r.mean[-1]),
                "final_half_width": float(r.half_width[-1]),
                "n_reps": len(r.reps),
                "failures": r.failures,
                "wall_clock_s": r.wall_clock,
                "grid": [
                    {"c": c, "T1": T1, "final_mean": fm, "n_ok": n} for c, T1, fm, n in r.grid
                ],
            }
        return out


def band_half_width(cumulative):
    """Pointwise 95% normal-approximation half-width, ``1.96 * std / sqrt(reps)``."""
    n = cumulative.shape[0]
    if n < 2:
        return np.zeros(cumulative.shape[1])
    return 1.96 * cumulative.std(axis=0, ddof=1) / math.sqrt(n)


def run_experiment(config, progress=None):
    """Run every method over its grid and repetitions; keep the best grid point per method.

    The best point has the smallest mean cumulative regret at T; ties go to
    the first point in grid order.
    """
    tasks = [
        (config, m, rep, c, T1)
        for m in config.methods
        for c, T1 in config.grid_points(m)
        for rep in range(config.reps)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outputs = list(pool.map(_task, tasks, chunksize=4))
    else:
        outputs = []
        for i, task in enumerate(tasks):
            outputs.append(_task(task))
            if progress is not None:
                progress(i + 1, len(tasks))

    by_point, seconds = {}, {}
    for (_, m, rep, c, T1), (inst, err, dt) in zip(tasks, outputs):
        by_point.setdefault((m, c, T1), []).append((rep, inst, err))
        seconds[m] = seconds.get(m, 0.0) + dt

    methods = {}
    for m in config.methods:
        grid, best = [], None
        failures, n_runs = [], 0
        for c, T1 in config.grid_points(m):
            runs = by_point[(m, c, T1)]
            ok = [(rep, inst) for rep, inst, err in runs if err is None]
            failures += [
                {"rep": rep, "c": c, "T1": T1, "error": err} for rep, _, err in runs if err
            ]
            n_runs += len(runs)
            final = float(np.mean([inst.sum() for _, inst in ok])) if ok else math.inf
            grid.append((c, T1, final, len(ok)))
            if ok and (best is None or final < best[0]):
                best = (final, c, T1, ok)
        if len(failures) > MAX_FAILURE_RATE * n_runs:
            raise ExperimentFailure(
                f"{m}: {len(failures)} of {n_runs} runs failed; first: {failures[0]['error']}"
            )
        _, c, T1, ok = best
        methods[m] = MethodResult(
            method=m,
            chosen={"c": c, "T1": T1},
            traces=np.stack([inst for _, inst in ok]),
            reps=[rep for rep, _ in ok],
            grid=grid,
            failures=failures,
            wall_clock=seconds[m],
        )
    return AggregateResult(config=config, methods=methods)


# -- output -------------------------------------------------------------------


def logged_rounds(T, stride=10, dense_until=100):
    """1-based rounds written to CSV: all up to ``dense_until``, then every ``stride``-th."""
    t = np.arange(1, T + 1)
    return t[(t <= dense_until) | (t % stride == 0)]


def emit_csv(result, path, stride=None, dense_until=None):
    cfg = result.config
    stride = cfg.log_stride if stride is None else stride
    dense_until = cfg.log_dense_until if dense_until is None else dense_until
    rounds = logged_rounds(cfg.T, stride, dense_until)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "rep", "t", "inst_regret", "cum_regret"])
        for m, res in result.methods.items():
            cum = res.cumulative
            for row, rep in enumerate(res.reps):
                for t in rounds:
                    w.writerow([m, rep, int(t), repr(float(res.traces[row, t - 1])), repr(float(cum[row, t - 1]))])
    return path


def read_csv(path):
    """Load an emitted CSV into ``{method: {rep: (t, inst, cum)}}`` preserving file order."""
    data = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            per = data.setdefault(row["method"], {}).setdefault(int(row["rep"]), ([], [], []))
            per[0].append(int(row["t"]))
            per[1].append(float(row["inst_regret"]))
            per[2].append(float(row["cum_regret"]))
    return {
        m: {rep: tuple(np.asarray(col) for col in cols) for rep, cols in reps.items()}
        for m, reps in data.items()
    }


def curves_from_csv(path):
    curves = {}
    for m, reps in read_csv(path).items():
        ts = [v[0] for v in reps.values()]
        t = ts[0]
        if any(len(x) != len(t) or np.any(x != t) for x in ts):
            raise ValueError(f"{m}: repetitions were logged at different rounds")
        cum = np.stack([v[2] for v in reps.values()])
        curves[m] = (t, cum.mean(axis=0), band_half_width(cum))
    return curves


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def emit_plot(result, path, title="Cumulative regret", width=720, height=440):
    """Mean cumulative regret per method with shaded 95% bands, as standalone SVG."""
    curves = result.curves() if isinstance(result, AggregateResult) else result
    if not curves:
        raise ValueError("nothing to plot")
    left, right, top, bottom = 70, 150, 40, 55
    pw, ph = width - left - right, height - top - bottom
    t_max = max(float(t[-1]) for t, _, _ in curves.values())
    t_min = min(float(t[0]) for t, _, _ in curves.values())
    y_max = max(float(np.max(m + h)) for _, m, h in curves.values()) or 1.0
    y_max *= 1.05

    def sx(t):
        return left + pw * (t - t_min) / max(t_max - t_min, 1.0)

    def sy(y):
        return top + ph * (1.0 - max(y, 0.0) / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
    ]
    for tick in _nice_ticks(0.0, y_max):
        y = sy(tick)
        parts.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#e5e5e5"/>')
        parts.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end">{tick:g}</text>')
    for tick in _nice_ticks(t_min, t_max):
        x = sx(tick)
        parts.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">{tick:g}</text>')
    parts.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    parts.append(
        f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">round t</text>'
    )
    parts.append(
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">cumulative regret</text>'
    )

    for k, (name, (t, mean, hw)) in enumerate(curves.items()):
        color = _PALETTE[k % len(_PALETTE)]
        # thin long curves to at most ~600 vertices
        step = max(1, len(t) // 600)
        idx = np.unique(np.r_[np.arange(0, len(t), step), len(t) - 1])
        upper = " ".join(f"{_fmt(sx(t[i]))},{_fmt(sy(mean[i] + hw[i]))}" for i in idx)
        lower = " ".join(f"{_fmt(sx(t[i]))},{_fmt(sy(mean[i] - hw[i]))}" for i in idx[::-1])
        line = " ".join(f"{_fmt(sx(t[i]))},{_fmt(sy(mean[i]))}" for i in idx)
        parts.append(
            f'<polygon class="band" data-method="{name}" points="{upper} {lower}" '
            f'fill="{color}" fill-opacity="0.2" stroke="none"/>'
        )
        parts.append(
            f'<polyline class="mean" data-method="{name}" points="{line}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = top + 16 + 20 * k
        parts.append(
            f'<line class="legend" x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" '
            f'stroke="{color}" stroke-width="3"/>'
        )
        parts.append(f'<text class="legend" x="{left + pw + 42}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def write_summary(result, path):
    payload = {"config": dump_config(result.config), "methods": result.summary()}
    Path(path).write_text(json.dumps(payload, indent=2, default=float) + "\n", encoding="utf-8")
