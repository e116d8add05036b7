"""Config-driven experiment protocol: ratio/SNR sweeps comparing recovery methods.

For every (measurement ratio, SNR) cell the harness calibrates the residual
bound once over fresh Monte-Carlo draws, then runs the requested repetitions:
draw an index multiset, acquire with fresh noise, reconstruct with both the
l1 solver and the minimal-energy baseline, and record reconstruction SNRs.
Everything is keyed off one master seed, so a config reproduces its records
exactly (wall-clock columns excepted).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import rng
from .acquisition import compressive_acquire, light_exposure
from .coherence import SamplingPlan, build_pmf, sample_omega, uniform_pmf
from .core import Dims, HSVolume
from .pgmio import write_pgm
from .phantom import default_phantom
from .recovery import SolverConfig, calibrate_epsilon, rsnr, snr_to_sigma, solve_bpdn, solve_me

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "run_experiment",
    "export_csv",
    "load_records_csv",
    "aggregate_records",
    "export_pmf_images",
    "export_mask_images",
    "export_volume_slices",
    "export_images",
    "parse_config_text",
    "load_config",
    "format_config",
    "preset_config",
    "PRESETS",
]

PMF_VARIANTS = ("kappa_sq", "reciprocal", "uniform")
KAPPA_VARIANTS = ("single_cap", "product")

# sub-stream tags for deriving per-cell / per-repetition seeds
_STREAM_EPSILON = 101
_STREAM_PLAN = 102
_STREAM_NOISE = 103
_STREAM_PHANTOM = 104


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one sweep; the README documents the file schema."""

    n_xi: int = 64
    n_p_bar: int = 16
    measurement_ratios: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    snr_db: tuple[float, ...] = (10.0, 15.0, 20.0)
    repetitions: int = 10
    pmf_variant: str = "kappa_sq"
    kappa_variant: str = "product"
    epsilon_trials: int = 100
    epsilon_percentile: float = 0.95
    seed: int = 0
    phantom_seed: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.measurement_ratios or any(not 0 < r <= 1 for r in self.measurement_ratios):
            raise ValueError("measurement ratios must lie in (0, 1]")
        if self.pmf_variant not in PMF_VARIANTS:
            raise ValueError(f"pmf_variant must be one of {PMF_VARIANTS}")
        if self.kappa_variant not in KAPPA_VARIANTS:
            raise ValueError(f"kappa_variant must be one of {KAPPA_VARIANTS}")

    @property
    def dims(self) -> Dims:
        return Dims(self.n_xi, self.n_p_bar)


@dataclass(frozen=True)
class ExperimentRecord:
    """One reconstruction outcome (one method, one repetition, one cell)."""

    ratio: float
    snr_db: float
    repetition: int
    method: str
    m: int
    m_over_nhs: float
    m_over_nxi: float
    exposure_ratio: float
    epsilon: float
    rsnr_db: float
    iterations: int
    converged: bool
    wall_time_s: float
    pmf_variant: str
    kappa_variant: str
    seed: int


def _build_pmf(cfg: ExperimentConfig, dims: Dims) -> np.ndarray:
    if cfg.pmf_variant == "uniform":
        return uniform_pmf(dims)
    return build_pmf(dims, cfg.pmf_variant, cfg.kappa_variant)


def run_experiment(
    cfg: ExperimentConfig, volume: HSVolume | None = None, progress: bool = False
) -> list[ExperimentRecord]:
    """Run the full sweep; never aborts on solver non-convergence."""
    dims = cfg.dims
    if volume is None:
        phantom_seed = (
            cfg.phantom_seed
            if cfg.phantom_seed is not None
            else rng.derive_seed(cfg.seed, _STREAM_PHANTOM)
        )
        volume = default_phantom(dims, phantom_seed)
    elif volume.dims != dims:
        raise ValueError(f"volume dims {volume.dims} do not match config dims {dims}")
    pmf = _build_pmf(cfg, dims)
    records: list[ExperimentRecord] = []
    for ri, ratio in enumerate(cfg.measurement_ratios):
        m = max(1, round(ratio * dims.n_hs))
        exposure = light_exposure(m, dims).ratio
        for si, snr in enumerate(cfg.snr_db):
            sigma = snr_to_sigma(volume, snr)
            if sigma == 0.0:
                epsilon = 0.0
            else:
                epsilon = calibrate_epsilon(
                    sigma,
                    pmf,
                    m,
                    dims,
                    trials=cfg.epsilon_trials,
                    percentile=cfg.epsilon_percentile,
                    seed=rng.derive_seed(cfg.seed, _STREAM_EPSILON, ri, si),
                )
            for rep in range(1, cfg.repetitions + 1):
                plan = sample_omega(pmf, m, rng.derive_seed(cfg.seed, _STREAM_PLAN, ri, si, rep))
                ms = compressive_acquire(
                    volume, plan, sigma, rng.derive_seed(cfg.seed, _STREAM_NOISE, ri, si, rep)
                )
                for method in ("cs", "me"):
                    t0 = time.perf_counter()
                    if method == "cs":
                        result = solve_bpdn(ms, plan, epsilon, cfg.solver)
                    else:
                        result = solve_me(ms, plan, cfg.solver)
                    wall = time.perf_counter() - t0
                    records.append(
                        ExperimentRecord(
                            ratio=float(ratio),
                            snr_db=float(snr),
                            repetition=rep,
                            method=method,
                            m=m,
                            m_over_nhs=m / dims.n_hs,
                            m_over_nxi=m / dims.n_xi,
                            exposure_ratio=exposure,
                            epsilon=float(epsilon),
                            rsnr_db=rsnr(volume, result.x_hat),
                            iterations=result.iterations,
                            converged=result.converged,
                            wall_time_s=wall,
                            pmf_variant=cfg.pmf_variant,
                            kappa_variant=cfg.kappa_variant,
                            seed=cfg.seed,
                        )
                    )
                    if progress:
                        print(
                            f"ratio={ratio:g} snr={snr:g} rep={rep} {method}: "
                            f"rsnr={records[-1].rsnr_db:.2f} dB in {wall:.1f}s "
                            f"({result.iterations} it, converged={result.converged})"
                        )
    return records


_CSV_COLUMNS = [f.name for f in fields(ExperimentRecord)]


def export_csv(records: list[ExperimentRecord], path) -> None:
    """Write records with a stable column order; floats use repr so parsing
    them back recovers the exact values."""
    if not records:
        raise ValueError("no records to export")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for rec in records:
            cells = []
            for name in _CSV_COLUMNS:
                val = getattr(rec, name)
                if isinstance(val, bool):
                    cells.append("true" if val else "false")
                elif isinstance(val, float):
                    cells.append(repr(val))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")


def load_records_csv(path) -> list[ExperimentRecord]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0].split(",") != _CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header in {path}")
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    out = []
    for line in lines[1:]:
        cells = dict(zip(_CSV_COLUMNS, line.split(",")))
        kwargs = {}
        for name, raw in cells.items():
            t = types[name]
            if t == "bool":
                kwargs[name] = raw == "true"
            elif t == "int":
                kwargs[name] = int(raw)
            elif t == "float":
                kwargs[name] = float(raw)
            else:
                kwargs[name] = raw
        out.append(ExperimentRecord(**kwargs))
    return out


def aggregate_records(
    records: list[ExperimentRecord],
) -> dict[tuple[float, float, str], tuple[float, float, int]]:
    """Per-(ratio, snr, method) mean/std/count of the reconstruction SNR."""
    cells: dict[tuple[float, float, str], list[float]] = {}
    for rec in records:
        cells.setdefault((rec.ratio, rec.snr_db, rec.method), []).append(rec.rsnr_db)
    out = {}
    for key, vals in cells.items():
        arr = np.asarray(vals)
        out[key] = (float(arr.mean()), float(arr.std()), len(vals))
    return out


# ---------------------------------------------------------------------------
# Image artifacts
# ---------------------------------------------------------------------------


def export_pmf_images(pmf: np.ndarray, dims: Dims, directory, prefix: str = "pmf") -> list[Path]:
    """One PGM per OPD slice over (l_y, l_x).

    Works for any nonnegative per-flat-index vector (sampling pmfs,
    coherence bounds); each slice is scaled independently.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = np.asarray(pmf).reshape(dims.n_xi, dims.n_p_bar, dims.n_p_bar)
    paths = []
    for l_xi in range(1, dims.n_xi + 1):
        p = directory / f"{prefix}_lxi{l_xi:04d}.pgm"
        write_pgm(grid[l_xi - 1], p)
        paths.append(p)
    return paths


def export_mask_images(
    plan: SamplingPlan, dims: Dims, directory, prefix: str = "mask"
) -> list[Path]:
    """One PGM per OPD slice with per-index draw counts of the multiset."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    counts = np.bincount(plan.omega - 1, minlength=dims.n_hs).astype(np.float64)
    grid = counts.reshape(dims.n_xi, dims.n_p_bar, dims.n_p_bar)
    paths = []
    for l_xi in range(1, dims.n_xi + 1):
        p = directory / f"{prefix}_lxi{l_xi:04d}.pgm"
        write_pgm(grid[l_xi - 1], p)
        paths.append(p)
    return paths


def export_volume_slices(
    vol: HSVolume, wavenumber_indices, directory, prefix: str = "map"
) -> list[Path]:
    """Spatial maps of a volume at chosen (1-based) wavenumber indices.

    Values are shifted so the slice minimum maps to black (volumes from
    solvers may dip slightly negative).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cube = vol.to_cube()
    paths = []
    for l_nu in wavenumber_indices:
        if not 1 <= l_nu <= vol.dims.n_xi:
            raise ValueError(f"wavenumber index out of range [1, {vol.dims.n_xi}]: {l_nu}")
        sl = cube[l_nu - 1]
        p = Path(directory) / f"{prefix}_lnu{l_nu:04d}.pgm"
        write_pgm(sl - sl.min(), p)
        paths.append(p)
    return paths


def export_images(
    directory,
    dims: Dims,
    pmf: np.ndarray | None = None,
    plan: SamplingPlan | None = None,
    volume: HSVolume | None = None,
    wavenumber_indices=(),
) -> list[Path]:
    """Bundle exporter used by the service layer; returns all written paths."""
    paths: list[Path] = []
    if pmf is not None:
        paths += export_pmf_images(pmf, dims, directory)
    if plan is not None:
        paths += export_mask_images(plan, dims, directory)
    if volume is not None and wavenumber_indices:
        paths += export_volume_slices(volume, wavenumber_indices, directory)
    return paths


# ---------------------------------------------------------------------------
# Config file format: "key = value" lines, '#' comments, strict keys
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "n_xi": int,
    "n_p_bar": int,
    "measurement_ratios": "float_list",
    "snr_db": "float_list",
    "repetitions": int,
    "pmf_variant": str,
    "kappa_variant": str,
    "epsilon_trials": int,
    "epsilon_percentile": float,
    "seed": int,
    "phantom_seed": int,
    "max_iterations": int,
    "feasibility_tolerance": float,
    "objective_tolerance": float,
    "dr_gamma": float,
    "output_dir": str,
}

_SOLVER_KEYS = ("max_iterations", "feasibility_tolerance", "objective_tolerance", "dr_gamma")


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the key-value config format; unknown or repeated keys are errors."""
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind == "float_list":
                seen[key] = tuple(float(tok) for tok in value.split(",") if tok.strip())
            elif kind is int:
                seen[key] = int(value)
            elif kind is float:
                seen[key] = float(value)
            else:
                seen[key] = value
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key!r}: {value!r}") from exc
    solver_kwargs = {k: seen.pop(k) for k in _SOLVER_KEYS if k in seen}
    solver = SolverConfig(**solver_kwargs) if solver_kwargs else SolverConfig()
    return ExperimentConfig(solver=solver, **seen)


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: ExperimentConfig) -> str:
    """Render a config back to the file format (used to echo presets)."""
    lines = [
        f"n_xi = {cfg.n_xi}",
        f"n_p_bar = {cfg.n_p_bar}",
        "measurement_ratios = " + ", ".join(repr(r) for r in cfg.measurement_ratios),
        "snr_db = " + ", ".join(repr(s) for s in cfg.snr_db),
        f"repetitions = {cfg.repetitions}",
        f"pmf_variant = {cfg.pmf_variant}",
        f"kappa_variant = {cfg.kappa_variant}",
        f"epsilon_trials = {cfg.epsilon_trials}",
        f"epsilon_percentile = {cfg.epsilon_percentile!r}",
        f"seed = {cfg.seed}",
        f"max_iterations = {cfg.solver.max_iterations}",
        f"feasibility_tolerance = {cfg.solver.feasibility_tolerance!r}",
        f"objective_tolerance = {cfg.solver.objective_tolerance!r}",
    ]
    if cfg.phantom_seed is not None:
        lines.append(f"phantom_seed = {cfg.phantom_seed}")
    if cfg.solver.dr_gamma is not None:
        lines.append(f"dr_gamma = {cfg.solver.dr_gamma!r}")
    if cfg.output_dir is not None:
        lines.append(f"output_dir = {cfg.output_dir}")
    return "\n".join(lines) + "\n"


PRESETS: dict[str, ExperimentConfig] = {
    # desk-scale default grid
    "default": ExperimentConfig(),
    # the original acquisition scale; runs for a long time
    "paper-scale": ExperimentConfig(n_xi=512, n_p_bar=64),
    # a tiny smoke-test grid
    "smoke": ExperimentConfig(
        n_xi=16,
        n_p_bar=4,
        measurement_ratios=(0.25, 0.5),
        snr_db=(20.0,),
        repetitions=2,
        epsilon_trials=20,
    ),
}


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]
