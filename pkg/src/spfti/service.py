"""HTTP service wrapping the toolkit.

Endpoints operate on files referenced by path (volumes, measurement sets,
CSV/PGM artifacts live on the service host's filesystem) and return small
JSON summaries.  The CLI in :mod:`spfti.cli` is a thin client of this app.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .acquisition import (
    compressive_acquire,
    light_exposure,
    load_measurements,
    nyquist_acquire,
    save_measurements,
)
from .coherence import (
    SamplingPlan,
    build_pmf,
    coherence_profile,
    profile_to_csv,
    sample_omega,
    uniform_pmf,
)
from .core import Dims, unflatten_index
from .experiment import (
    aggregate_records,
    export_csv,
    export_images,
    load_config,
    preset_config,
    run_experiment,
)
from .phantom import default_phantom, load_volume, save_volume
from .recovery import SolverConfig, calibrate_epsilon, rsnr, snr_to_sigma, solve_bpdn, solve_me

app = FastAPI(title="spfti", version=__version__)


class DimsModel(BaseModel):
    n_xi: int = Field(ge=2)
    n_p_bar: int = Field(ge=2)

    def to_dims(self) -> Dims:
        try:
            return Dims(self.n_xi, self.n_p_bar)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc


class SolverModel(BaseModel):
    max_iterations: int = 1500
    feasibility_tolerance: float = 1e-4
    objective_tolerance: float = 1e-5
    dr_gamma: float | None = None

    def to_config(self) -> SolverConfig:
        try:
            return SolverConfig(
                max_iterations=self.max_iterations,
                feasibility_tolerance=self.feasibility_tolerance,
                objective_tolerance=self.objective_tolerance,
                dr_gamma=self.dr_gamma,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc


class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def _fail(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail=str(exc))


def _build_pmf_checked(variant: str, kappa_variant: str, dims: Dims) -> np.ndarray:
    try:
        if variant == "uniform":
            return uniform_pmf(dims)
        return build_pmf(dims, variant, kappa_variant)
    except ValueError as exc:
        raise _fail(exc) from exc


# ---------------------------------------------------------------------------
# Coherence / sampling artifacts
# ---------------------------------------------------------------------------


class CoherenceRequest(BaseModel):
    dims: DimsModel
    kappa_variant: Literal["single_cap", "product"] = "single_cap"
    pmf_variant: Literal["kappa_sq", "reciprocal", "uniform"] = "kappa_sq"
    output_dir: str
    write_images: bool = False


class CoherenceResponse(BaseModel):
    kappa_sq_norm: float
    pmf_sum: float
    pmf_argmax_flat: int
    pmf_argmax_l_xi: int
    pmf_argmax_l_x: int
    pmf_argmax_l_y: int
    kappa_csv: str
    pmf_csv: str
    image_paths: list[str]


@app.post("/coherence", response_model=CoherenceResponse)
def coherence(req: CoherenceRequest) -> CoherenceResponse:
    dims = req.dims.to_dims()
    profile = coherence_profile(dims, req.kappa_variant)
    pmf = _build_pmf_checked(req.pmf_variant, req.kappa_variant, dims)
    out = Path(req.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    kappa_csv = out / "kappa.csv"
    pmf_csv = out / "pmf.csv"
    profile_to_csv(profile.kappa, dims, kappa_csv)
    profile_to_csv(pmf, dims, pmf_csv)
    images: list[str] = []
    if req.write_images:
        from .experiment import export_pmf_images

        images = [str(p) for p in export_images(out / "images", dims, pmf=pmf)]
        images += [
            str(p) for p in export_pmf_images(profile.kappa, dims, out / "images", prefix="kappa")
        ]
    argmax_flat = int(np.argmax(pmf)) + 1
    l_xi, l_x, l_y = unflatten_index(argmax_flat, dims)
    return CoherenceResponse(
        kappa_sq_norm=profile.kappa_sq_norm,
        pmf_sum=float(pmf.sum()),
        pmf_argmax_flat=argmax_flat,
        pmf_argmax_l_xi=l_xi,
        pmf_argmax_l_x=l_x,
        pmf_argmax_l_y=l_y,
        kappa_csv=str(kappa_csv),
        pmf_csv=str(pmf_csv),
        image_paths=images,
    )


# ---------------------------------------------------------------------------
# Phantom
# ---------------------------------------------------------------------------


class PhantomRequest(BaseModel):
    dims: DimsModel
    seed: int = 0
    output_path: str


class PhantomResponse(BaseModel):
    output_path: str
    n_hs: int
    max_value: float
    norm: float


@app.post("/phantom", response_model=PhantomResponse)
def phantom(req: PhantomRequest) -> PhantomResponse:
    dims = req.dims.to_dims()
    vol = default_phantom(dims, req.seed)
    save_volume(vol, req.output_path, sidecar={"generator": "default_phantom", "seed": req.seed})
    return PhantomResponse(
        output_path=req.output_path,
        n_hs=dims.n_hs,
        max_value=float(vol.data.max()),
        norm=vol.norm(),
    )


# ---------------------------------------------------------------------------
# Acquisition
# ---------------------------------------------------------------------------


class AcquireRequest(BaseModel):
    volume_path: str
    output_path: str
    mode: Literal["nyquist", "compressive"] = "compressive"
    ratio: float | None = None
    m: int | None = None
    pmf_variant: Literal["kappa_sq", "reciprocal", "uniform"] = "kappa_sq"
    kappa_variant: Literal["single_cap", "product"] = "product"
    snr_db: float | None = None
    sigma: float | None = None
    plan_seed: int = 0
    noise_seed: int = 0


class AcquireResponse(BaseModel):
    output_path: str
    m: int
    sigma: float
    exposure_ratio: float


@app.post("/acquire", response_model=AcquireResponse)
def acquire(req: AcquireRequest) -> AcquireResponse:
    try:
        vol = load_volume(req.volume_path)
    except (OSError, ValueError) as exc:
        raise _fail(exc) from exc
    if (req.sigma is None) == (req.snr_db is None):
        raise HTTPException(status_code=422, detail="give exactly one of sigma or snr_db")
    sigma = req.sigma if req.sigma is not None else snr_to_sigma(vol, req.snr_db)
    try:
        if req.mode == "nyquist":
            ms = nyquist_acquire(vol, sigma, req.noise_seed)
            ms.meta = {"mode": "nyquist"}
        else:
            if (req.ratio is None) == (req.m is None):
                raise ValueError("compressive mode needs exactly one of ratio or m")
            m = req.m if req.m is not None else max(1, round(req.ratio * vol.dims.n_hs))
            pmf = _build_pmf_checked(req.pmf_variant, req.kappa_variant, vol.dims)
            plan = sample_omega(pmf, m, req.plan_seed)
            ms = compressive_acquire(vol, plan, sigma, req.noise_seed)
            ms.meta = {
                "mode": "compressive",
                "pmf_variant": req.pmf_variant,
                "kappa_variant": req.kappa_variant,
                "plan_seed": req.plan_seed,
            }
        save_measurements(ms, req.output_path)
    except ValueError as exc:
        raise _fail(exc) from exc
    return AcquireResponse(
        output_path=req.output_path,
        m=ms.m,
        sigma=float(sigma),
        exposure_ratio=light_exposure(ms.m, vol.dims).ratio,
    )


# ---------------------------------------------------------------------------
# Recovery
# ---------------------------------------------------------------------------


class RecoverRequest(BaseModel):
    measurement_path: str
    output_path: str
    method: Literal["bpdn", "me"] = "bpdn"
    epsilon: float | None = None  # None: calibrate from the stored sigma
    epsilon_trials: int = 100
    epsilon_percentile: float = 0.95
    epsilon_seed: int = 0
    pmf_variant: Literal["kappa_sq", "reciprocal", "uniform"] | None = None
    kappa_variant: Literal["single_cap", "product"] | None = None
    solver: SolverModel = SolverModel()
    reference_volume_path: str | None = None


class RecoverResponse(BaseModel):
    output_path: str
    method: str
    epsilon: float
    residual_norm: float
    l1_norm: float
    iterations: int
    converged: bool
    rsnr_db: float | None = None


@app.post("/recover", response_model=RecoverResponse)
def recover(req: RecoverRequest) -> RecoverResponse:
    try:
        ms = load_measurements(req.measurement_path)
    except (OSError, ValueError) as exc:
        raise _fail(exc) from exc
    meta = ms.meta or {}
    cfg = req.solver.to_config()
    epsilon = 0.0
    try:
        if req.method == "me":
            result = solve_me(ms, None, cfg)
        else:
            pmf_variant = req.pmf_variant or meta.get("pmf_variant", "uniform")
            kappa_variant = req.kappa_variant or meta.get("kappa_variant", "product")
            pmf = _build_pmf_checked(pmf_variant, kappa_variant, ms.dims)
            plan = SamplingPlan(
                pmf=pmf,
                omega=ms.omega,
                weights=1.0 / np.sqrt(pmf[ms.omega - 1]),
                seed=int(meta.get("plan_seed", 0)),
                m=ms.m,
            )
            if req.epsilon is not None:
                epsilon = req.epsilon
            elif ms.sigma_nyq > 0:
                epsilon = calibrate_epsilon(
                    ms.sigma_nyq,
                    pmf,
                    ms.m,
                    ms.dims,
                    trials=req.epsilon_trials,
                    percentile=req.epsilon_percentile,
                    seed=req.epsilon_seed,
                )
            result = solve_bpdn(ms, plan, epsilon, cfg)
        save_volume(
            result.x_hat,
            req.output_path,
            sidecar={"method": req.method, "epsilon": epsilon, "converged": result.converged},
        )
    except ValueError as exc:
        raise _fail(exc) from exc
    rsnr_db = None
    if req.reference_volume_path is not None:
        try:
            ref = load_volume(req.reference_volume_path)
            rsnr_db = rsnr(ref, result.x_hat)
        except (OSError, ValueError) as exc:
            raise _fail(exc) from exc
    return RecoverResponse(
        output_path=req.output_path,
        method=req.method,
        epsilon=float(epsilon),
        residual_norm=result.residual_norm,
        l1_norm=result.l1_norm,
        iterations=result.iterations,
        converged=result.converged,
        rsnr_db=rsnr_db,
    )


# ---------------------------------------------------------------------------
# Exposure accounting
# ---------------------------------------------------------------------------


class ExposureRequest(BaseModel):
    dims: DimsModel
    m: float


class ExposureResponse(BaseModel):
    compressive_units: float
    nyquist_units: float
    ratio: float


@app.post("/exposure", response_model=ExposureResponse)
def exposure(req: ExposureRequest) -> ExposureResponse:
    try:
        report = light_exposure(req.m, req.dims.to_dims())
    except ValueError as exc:
        raise _fail(exc) from exc
    return ExposureResponse(
        compressive_units=report.compressive_units,
        nyquist_units=report.nyquist_units,
        ratio=report.ratio,
    )


# ---------------------------------------------------------------------------
# Experiment sweeps
# ---------------------------------------------------------------------------


class CellSummary(BaseModel):
    ratio: float
    snr_db: float
    method: str
    mean_rsnr_db: float
    std_rsnr_db: float
    runs: int


class ExperimentRequest(BaseModel):
    output_dir: str
    config_path: str | None = None
    preset: str | None = None
    seed: int | None = None
    volume_path: str | None = None


class ExperimentResponse(BaseModel):
    records_csv: str
    n_records: int
    all_converged: bool
    cells: list[CellSummary]


@app.post("/experiment", response_model=ExperimentResponse)
def experiment(req: ExperimentRequest) -> ExperimentResponse:
    if (req.config_path is None) == (req.preset is None):
        raise HTTPException(status_code=422, detail="give exactly one of config_path or preset")
    try:
        cfg = load_config(req.config_path) if req.config_path else preset_config(req.preset)
    except (OSError, ValueError) as exc:
        raise _fail(exc) from exc
    if req.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=req.seed)
    volume = None
    if req.volume_path is not None:
        try:
            volume = load_volume(req.volume_path)
        except (OSError, ValueError) as exc:
            raise _fail(exc) from exc
    try:
        records = run_experiment(cfg, volume=volume)
    except ValueError as exc:
        raise _fail(exc) from exc
    out = Path(req.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_csv = out / "records.csv"
    export_csv(records, records_csv)
    cells = [
        CellSummary(
            ratio=ratio, snr_db=snr, method=method, mean_rsnr_db=mean, std_rsnr_db=std, runs=n
        )
        for (ratio, snr, method), (mean, std, n) in sorted(aggregate_records(records).items())
    ]
    return ExperimentResponse(
        records_csv=str(records_csv),
        n_records=len(records),
        all_converged=all(r.converged for r in records),
        cells=cells,
    )
