"""Reproducible Monte Carlo harness comparing the blind and pilot schemes.

One experiment sweeps a single configuration field over a grid.  Every
(grid point, trial) pair owns an independent RNG substream derived from the
master seed, so results are reproducible and independent of how trials are
distributed across worker processes: per-trial metrics are collected into
trial-indexed arrays and reduced in trial order.

The blind trial and the pilot-baseline trial share the same channel
realization; data, precoders, and noise are drawn from the same substream in
a fixed order regardless of which schemes are enabled.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .baseline import despread_pilot, dft_pilots, omp_channel_estimate, synthesize_pilot_frame, zf_detect
from .bcd import (
    BcdConfig,
    RefinementState,
    default_r_bounds,
    init_from_support,
    project_onto_channel,
    run_bcd,
)
from .bomp import KnownPaths, ResidualThreshold, run_bomp
from .errors import ConfigError, PolarBlindError
from .geometry import (
    ArrayGeometry,
    PolarDictionary,
    build_polar_dictionary,
    fraunhofer_distance,
    sample_user_channel,
    steering_matrix,
)
from .waveform import (
    FrameConfig,
    effective_received,
    detect_data,
    generate_precoders,
    make_augmented_data,
    qam_modulate,
    synthesize_frame,
)

SCHEMES = ("bomp", "bomp+bcd", "omp+zf")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; every field can appear in the JSON file."""

    n_antennas: int = 32
    wavelength: float = 0.003
    n_users: int = 2
    coherence_len: int = 64
    data_len: int = 8
    qam_order: int = 16
    n_paths: int = 3
    snr_db: float = 0.0
    sigma2: float = 1.0
    angle_range: tuple[float, float] | None = None  # None -> (-pi/4, pi/4)
    distance_range: tuple[float, float] | None = None  # None -> (R_f/20, 2 R_f/3)
    samples_per_angle: int = 6
    dictionary_r_min: float | None = None  # None -> min sampled distance
    include_far_field: bool = True
    bomp_stop: str = "known_paths"  # or "residual"
    bomp_eps1: float = 0.05
    bomp_max_iters: int | None = None
    baseline_n_paths: int | None = None  # None -> n_paths
    bcd_max_iters: int = 15
    bcd_eps2_rel: float = 1e-6
    bcd_max_backtracks: int = 20
    trials: int = 500
    seed: int = 0
    schemes: tuple[str, ...] = SCHEMES
    sweep_name: str = "snr_db"
    sweep_values: tuple = (-10.0, -5.0, 0.0, 5.0)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {SCHEMES}")
        if self.sweep_name not in {f.name for f in fields(self)}:
            raise ConfigError(f"unknown sweep variable {self.sweep_name!r}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep_values must be nonempty")
        if self.bomp_stop not in ("known_paths", "residual"):
            raise ConfigError("bomp_stop must be 'known_paths' or 'residual'")


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    sweep = raw.pop("sweep", None)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("angle_range", "distance_range", "schemes", "sweep_values"):
        if key in raw and raw[key] is not None:
            raw[key] = tuple(raw[key])
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) - {"name", "values"}:
            raise ConfigError("sweep must be an object with keys 'name' and 'values'")
        raw["sweep_name"] = sweep["name"]
        raw["sweep_values"] = tuple(sweep["values"])
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object")
    return config_from_dict(raw)


@dataclass(eq=False)
class GridPoint:
    """Everything one grid point needs, precomputed once and shared by trials."""

    sweep_value: object
    geometry: ArrayGeometry
    dictionary: PolarDictionary
    frame_config: FrameConfig
    n_paths: int
    angle_range: tuple[float, float]
    distance_range: tuple[float, float]
    pilots: np.ndarray
    bomp_stop: object
    baseline_stop: object
    bcd_config: BcdConfig
    schemes: tuple[str, ...]


def build_grid_point(cfg: ExperimentConfig, sweep_value) -> GridPoint:
    cfg = replace(cfg, **{cfg.sweep_name: _coerce_like(cfg, cfg.sweep_name, sweep_value)})
    geom = ArrayGeometry.half_wavelength(cfg.n_antennas, cfg.wavelength)
    r_f = fraunhofer_distance(geom)
    angle_range = cfg.angle_range if cfg.angle_range is not None else (-np.pi / 4, np.pi / 4)
    distance_range = (
        cfg.distance_range if cfg.distance_range is not None else (r_f / 20.0, 2.0 * r_f / 3.0)
    )
    r_min = cfg.dictionary_r_min if cfg.dictionary_r_min is not None else distance_range[0]
    dictionary = build_polar_dictionary(
        geom, cfg.samples_per_angle, r_min, include_far_field=cfg.include_far_field
    )
    rho = 10.0 ** (cfg.snr_db / 10.0)
    frame_config = FrameConfig(
        n_users=cfg.n_users,
        coherence_len=cfg.coherence_len,
        data_len=cfg.data_len,
        qam_order=cfg.qam_order,
        rho=rho,
        sigma2=cfg.sigma2,
    )
    tau = cfg.coherence_len - cfg.data_len
    if tau < cfg.n_users:
        raise ConfigError(
            f"pilot budget T - S = {tau} is below the user count {cfg.n_users}"
        )
    # blind separation needs T >= K(S+1) so the stacked precoders stay tall
    need = cfg.n_users * (cfg.data_len + 1)
    if any(s != "omp+zf" for s in cfg.schemes) and cfg.coherence_len < need:
        raise ConfigError(
            f"blind schemes need coherence_len >= n_users*(data_len+1) = {need}, "
            f"got {cfg.coherence_len}"
        )
    if cfg.bomp_stop == "known_paths":
        bomp_stop = KnownPaths(cfg.n_paths)
    else:
        bomp_stop = ResidualThreshold(cfg.bomp_eps1, cfg.bomp_max_iters)
    baseline_stop = KnownPaths(
        cfg.baseline_n_paths if cfg.baseline_n_paths is not None else cfg.n_paths
    )
    bcd_config = BcdConfig(
        max_iters=cfg.bcd_max_iters,
        eps2_rel=cfg.bcd_eps2_rel,
        max_backtracks=cfg.bcd_max_backtracks,
        r_bounds=default_r_bounds(geom),
    )
    return GridPoint(
        sweep_value=sweep_value,
        geometry=geom,
        dictionary=dictionary,
        frame_config=frame_config,
        n_paths=cfg.n_paths,
        angle_range=angle_range,
        distance_range=distance_range,
        pilots=dft_pilots(tau, cfg.n_users),
        bomp_stop=bomp_stop,
        baseline_stop=baseline_stop,
        bcd_config=bcd_config,
        schemes=cfg.schemes,
    )


def _coerce_like(cfg: ExperimentConfig, name: str, value):
    current = getattr(cfg, name)
    if isinstance(current, bool):
        return bool(value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


@dataclass
class TrialOutcome:
    errors: int
    symbols: int
    nmse_num: float
    nmse_den: float
    flagged: bool
    seconds: float


def _flagged(n_symbols: int, den: float, seconds: float) -> TrialOutcome:
    # Flag policy: a degenerate trial counts every data symbol as an error
    # and contributes a zero channel estimate to the NMSE pool.
    return TrialOutcome(n_symbols, n_symbols, den, den, True, seconds)


def run_trial(grid: GridPoint, master_seed: int, grid_idx: int, trial_idx: int) -> dict:
    """One paired Monte Carlo trial; returns {scheme: TrialOutcome}.

    The RNG substream is fully determined by (master_seed, grid_idx,
    trial_idx), and all random quantities are drawn up front in a fixed
    order, so any trial can be replayed in isolation.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=(grid_idx, trial_idx))
    rng = np.random.default_rng(seq)
    fc = grid.frame_config
    geom = grid.geometry
    k_users, s_data = fc.n_users, fc.data_len

    channels = [
        sample_user_channel(geom, grid.n_paths, grid.angle_range, grid.distance_range, rng)
        for _ in range(k_users)
    ]
    payloads = [make_augmented_data(rng, fc) for _ in range(k_users)]
    precoders = generate_precoders(rng, fc)
    frame = synthesize_frame(channels, payloads, precoders, fc, rng)
    base_idx = rng.integers(0, fc.qam_order, size=(k_users, s_data))
    y_pilot, y_data = synthesize_pilot_frame(
        channels, grid.pilots, qam_modulate(base_idx, fc.qam_order), fc.rho, fc.sigma2, rng
    )

    den = float(sum(np.real(np.vdot(ch.h, ch.h)) for ch in channels))
    n_sym = k_users * s_data
    sqrt_rho = np.sqrt(fc.rho)
    out: dict[str, TrialOutcome] = {}

    need_bomp = "bomp" in grid.schemes or "bomp+bcd" in grid.schemes
    bomp_out = None
    t_bomp = 0.0
    if need_bomp:
        t0 = time.perf_counter()
        try:
            bomp_out = run_bomp(frame.ybar, grid.dictionary, precoders, grid.bomp_stop, fc.pilot)
        except PolarBlindError:
            bomp_out = None
        t_bomp = time.perf_counter() - t0

    if "bomp" in grid.schemes:
        if bomp_out is None:
            out["bomp"] = _flagged(n_sym, den, t_bomp)
        else:
            try:
                errors, num = 0, 0.0
                for k in range(k_users):
                    est = bomp_out.users[k]
                    idx = detect_data(est.dbar_hat, fc.pilot, fc.qam_order)
                    errors += int(np.count_nonzero(idx != payloads[k].data_indices))
                    diff = est.h_hat / sqrt_rho - channels[k].h
                    num += float(np.real(np.vdot(diff, diff)))
                out["bomp"] = TrialOutcome(errors, n_sym, num, den, False, t_bomp)
            except PolarBlindError:
                out["bomp"] = _flagged(n_sym, den, t_bomp)

    if "bomp+bcd" in grid.schemes:
        if bomp_out is None:
            out["bomp+bcd"] = _flagged(n_sym, den, t_bomp)
        else:
            t0 = time.perf_counter()
            try:
                blocks = effective_received(frame.ybar, precoders)
                errors, num = 0, 0.0
                for k in range(k_users):
                    est = bomp_out.users[k]
                    init = init_from_support(
                        grid.dictionary,
                        est.support,
                        est.g_hat[est.support],
                        est.dbar_hat[1:],
                        grid.bcd_config.r_bounds,
                    )
                    state = run_bcd(blocks[k][:, 1:], geom, init, grid.bcd_config)
                    h_hat = state.channel_estimate(geom)
                    dbar_est = project_onto_channel(blocks[k], h_hat)
                    idx = detect_data(dbar_est, fc.pilot, fc.qam_order)
                    errors += int(np.count_nonzero(idx != payloads[k].data_indices))
                    diff = h_hat / sqrt_rho - channels[k].h
                    num += float(np.real(np.vdot(diff, diff)))
                out["bomp+bcd"] = TrialOutcome(
                    errors, n_sym, num, den, False, t_bomp + time.perf_counter() - t0
                )
            except PolarBlindError:
                out["bomp+bcd"] = _flagged(n_sym, den, t_bomp + time.perf_counter() - t0)

    if "omp+zf" in grid.schemes:
        t0 = time.perf_counter()
        try:
            h_cols = []
            num = 0.0
            for k in range(k_users):
                obs = despread_pilot(y_pilot, grid.pilots, k, fc.rho)
                h_hat, _ = omp_channel_estimate(obs, grid.dictionary, grid.baseline_stop)
                h_cols.append(h_hat)
                diff = h_hat - channels[k].h
                num += float(np.real(np.vdot(diff, diff)))
            _, idx = zf_detect(y_data, np.column_stack(h_cols), fc.rho, fc.qam_order)
            errors = int(np.count_nonzero(idx != base_idx))
            out["omp+zf"] = TrialOutcome(
                errors, n_sym, num, den, False, time.perf_counter() - t0
            )
        except PolarBlindError:
            out["omp+zf"] = _flagged(n_sym, den, time.perf_counter() - t0)

    return out


@dataclass
class SchemeRow:
    sweep_value: object
    scheme: str
    ser: float
    ser_se: float
    nmse: float
    trials: int
    symbols_total: int
    flagged_trials: int
    wall_time_s: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[SchemeRow] = field(default_factory=list)


_POOL_STATE: dict = {}


def _pool_init(grids, seed):
    _POOL_STATE["grids"] = grids
    _POOL_STATE["seed"] = seed


def _pool_trial(task):
    grid_idx, trial_idx = task
    res = run_trial(_POOL_STATE["grids"][grid_idx], _POOL_STATE["seed"], grid_idx, trial_idx)
    return grid_idx, trial_idx, res


def run_experiment(cfg: ExperimentConfig, n_workers: int = 1) -> ExperimentResult:
    """Run the full sweep; deterministic for fixed seed regardless of workers.

    Only wall-clock columns depend on the execution environment.
    """
    if n_workers < 1:
        raise ConfigError("n_workers must be >= 1")
    grids = [build_grid_point(cfg, v) for v in cfg.sweep_values]
    per_grid = [[None] * cfg.trials for _ in grids]

    if n_workers == 1:
        for gi, grid in enumerate(grids):
            for ti in range(cfg.trials):
                per_grid[gi][ti] = run_trial(grid, cfg.seed, gi, ti)
    else:
        tasks = [(gi, ti) for gi in range(len(grids)) for ti in range(cfg.trials)]
        with ProcessPoolExecutor(
            max_workers=n_workers, initializer=_pool_init, initargs=(grids, cfg.seed)
        ) as pool:
            chunk = max(1, len(tasks) // (8 * n_workers))
            for gi, ti, res in pool.map(_pool_trial, tasks, chunksize=chunk):
                per_grid[gi][ti] = res

    result = ExperimentResult(config=cfg)
    for gi, grid in enumerate(grids):
        for scheme in cfg.schemes:
            outs = [per_grid[gi][ti][scheme] for ti in range(cfg.trials)]
            errors = int(np.sum(np.array([o.errors for o in outs], dtype=np.int64)))
            symbols = int(np.sum(np.array([o.symbols for o in outs], dtype=np.int64)))
            num = float(np.sum(np.array([o.nmse_num for o in outs])))
            den = float(np.sum(np.array([o.nmse_den for o in outs])))
            flagged = sum(1 for o in outs if o.flagged)
            seconds = float(np.sum(np.array([o.seconds for o in outs])))
            ser = errors / symbols
            result.rows.append(
                SchemeRow(
                    sweep_value=grid.sweep_value,
                    scheme=scheme,
                    ser=ser,
                    ser_se=float(np.sqrt(max(ser * (1.0 - ser), 0.0) / symbols)),
                    nmse=num / den,
                    trials=cfg.trials,
                    symbols_total=symbols,
                    flagged_trials=flagged,
                    wall_time_s=seconds,
                )
            )
    return result


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def emit_csv(result: ExperimentResult, path) -> None:
    """One row per (grid point, scheme); numbers at 10 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [result.config.sweep_name, "scheme", "ser", "nmse", "trials", "symbols_total", "wall_time_s"]
        )
        for row in result.rows:
            writer.writerow(
                [
                    _fmt(row.sweep_value),
                    row.scheme,
                    _fmt(row.ser),
                    _fmt(row.nmse),
                    row.trials,
                    row.symbols_total,
                    _fmt(row.wall_time_s),
                ]
            )


def emit_plotdata(result: ExperimentResult, path) -> None:
    """Gnuplot-style blocks per scheme: x, SER, binomial SE, NMSE."""
    with open(path, "w") as fh:
        for scheme in result.config.schemes:
            fh.write(f"# scheme: {scheme}\n")
            fh.write(f"# {result.config.sweep_name} ser ser_se nmse\n")
            for row in result.rows:
                if row.scheme == scheme:
                    fh.write(
                        f"{_fmt(row.sweep_value)} {_fmt(row.ser)} {_fmt(row.ser_se)} {_fmt(row.nmse)}\n"
                    )
            fh.write("\n")


def run_traced_trial(grid: GridPoint, master_seed: int, grid_idx: int = 0, trial_idx: int = 0):
    """Replay one trial with algorithm tracing enabled.

    Returns (bomp_rows, bcd_rows): bomp rows are (sweep, user, atom,
    angle_rad, inv_distance, relative_residual); bcd rows are (user, sweep,
    block, f, phi, step, backtracks).
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=(grid_idx, trial_idx))
    rng = np.random.default_rng(seq)
    fc = grid.frame_config
    channels = [
        sample_user_channel(grid.geometry, grid.n_paths, grid.angle_range, grid.distance_range, rng)
        for _ in range(fc.n_users)
    ]
    payloads = [make_augmented_data(rng, fc) for _ in range(fc.n_users)]
    precoders = generate_precoders(rng, fc)
    frame = synthesize_frame(channels, payloads, precoders, fc, rng)

    bomp_rows: list = []
    bcd_rows: list = []
    bomp_out = run_bomp(
        frame.ybar, grid.dictionary, precoders, grid.bomp_stop, fc.pilot, trace=bomp_rows
    )
    blocks = effective_received(frame.ybar, precoders)
    for k in range(fc.n_users):
        est = bomp_out.users[k]
        init = init_from_support(
            grid.dictionary,
            est.support,
            est.g_hat[est.support],
            est.dbar_hat[1:],
            grid.bcd_config.r_bounds,
        )
        state = run_bcd(blocks[k][:, 1:], grid.geometry, init, grid.bcd_config, collect_trace=True)
        for sweep, block, f_val, phi_val, eta, nbt in state.trace:
            bcd_rows.append((k, sweep, block, f_val, phi_val, eta, nbt))
    return bomp_rows, bcd_rows


# --- scaling benchmarks -----------------------------------------------------


def _time_stats(fn, repeats: int) -> tuple[float, float]:
    """(best, spread) wall time over repeats; spread is informational only."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), max(times) - min(times)


def bench_bomp(
    dict_sizes=(1024, 2048, 4096, 8192), repeats: int = 3, seed: int = 0
) -> list[tuple[int, float, float]]:
    """Wall time of one blind recovery as the dictionary grows; ~linear in Q."""
    rows = []
    n_antennas, t_len, s_len = 64, 256, 8
    geom = ArrayGeometry.half_wavelength(n_antennas, 0.003)
    r_f = fraunhofer_distance(geom)
    fc = FrameConfig(n_users=2, coherence_len=t_len, data_len=s_len, qam_order=16, rho=1.0)
    rng = np.random.default_rng(seed)
    channels = [
        sample_user_channel(geom, 3, (-np.pi / 4, np.pi / 4), (r_f / 20, 2 * r_f / 3), rng)
        for _ in range(fc.n_users)
    ]
    payloads = [make_augmented_data(rng, fc) for _ in range(fc.n_users)]
    precoders = generate_precoders(rng, fc)
    precoders.transform  # warm the cached despreader; not part of the timing
    frame = synthesize_frame(channels, payloads, precoders, fc, rng)
    for q in dict_sizes:
        if q % n_antennas:
            raise ConfigError(f"dictionary size {q} must be a multiple of N={n_antennas}")
        dictionary = build_polar_dictionary(geom, q // n_antennas, r_f / 20.0)
        best, spread = _time_stats(
            lambda: run_bomp(frame.ybar, dictionary, precoders, KnownPaths(3)), repeats
        )
        rows.append((q, best, spread))
    return rows


def bench_bcd(array_sizes=(512, 1024, 2048, 4096), repeats: int = 3, seed: int = 0) -> list[tuple[int, float, float]]:
    """Wall time of a fixed-sweep refinement as the array grows; ~quadratic in N.

    The instance is model-consistent noisy data with the start point near the
    truth, and the line searches get a zero backtrack budget, so every array
    size performs the same number of objective and gradient evaluations.
    Sizes start high enough that the projector evaluations dominate the
    per-call overhead of the smaller linear-algebra pieces.
    """
    rows = []
    s_len, n_paths = 64, 8
    rng = np.random.default_rng(seed)
    for n_antennas in array_sizes:
        geom = ArrayGeometry.half_wavelength(n_antennas, 0.003)
        r_f = fraunhofer_distance(geom)
        theta = rng.uniform(-np.pi / 4, np.pi / 4, n_paths)
        r = rng.uniform(r_f / 20, 2 * r_f / 3, n_paths)
        gamma = rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)
        delta = rng.standard_normal(s_len) + 1j * rng.standard_normal(s_len)
        y = np.outer(steering_matrix(geom, theta, r) @ gamma, delta)
        y += 0.01 * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        init = RefinementState(
            theta=theta + rng.normal(0.0, 1e-3, n_paths),
            r=r * (1.0 + rng.normal(0.0, 1e-3, n_paths)),
            gamma=gamma.copy(),
            delta=delta.copy(),
        )
        cfg = BcdConfig(
            max_iters=3, eps2_rel=0.0, eta0=1e-9, max_backtracks=0, r_bounds=(r_f / 20, 10 * r_f)
        )
        best, spread = _time_stats(lambda: run_bcd(y, geom, init, cfg), repeats)
        rows.append((n_antennas, best, spread))
    return rows


def fit_loglog_slope(rows) -> float:
    sizes = np.log([r[0] for r in rows])
    times = np.log([r[1] for r in rows])
    return float(np.polyfit(sizes, times, 1)[0])


def emit_bench_csv(rows, path, size_name: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([size_name, "seconds", "spread_seconds"])
        for size, seconds, spread in rows:
            writer.writerow([size, f"{seconds:.10g}", f"{spread:.10g}"])
