"""FastAPI service wrapping the core package.

The handler functions are plain callables on the pydantic models; the CLI
invokes them in-process and the HTTP routes delegate to them, so both
surfaces stay behaviorally identical.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..experiments import CSV_FIELDS, ExperimentConfig, run_method, sweep, synthetic_image
from ..fbl import FblParams, bcd_solve_fbl, lc_power_fbl
from ..ideal import AllocProblem, AllocationError, bcd_solve, power_solve_fixed_bits
from ..importance import synthetic_profile
from ..quantizer import PatchImage, dequantize, deserialize_payload, psnr, quantize, serialize_payload
from .schemas import (
    AllocateRequest,
    AllocateResponse,
    DequantizeRequest,
    DequantizeResponse,
    ExperimentConfigModel,
    HealthResponse,
    ProfileModel,
    QuantizeRequest,
    QuantizeResponse,
    ResultRowModel,
    SimulateRequest,
    SweepRequest,
    SweepResponse,
    SynthProfileRequest,
)

app = FastAPI(title="semlink", version=__version__)


def config_from_model(model: ExperimentConfigModel) -> ExperimentConfig:
    return ExperimentConfig.from_dict(model.model_dump())


def handle_allocate(req: AllocateRequest) -> AllocateResponse:
    import time

    t_start = time.perf_counter()
    gains = np.asarray(req.eq_gains, dtype=float)
    g = gains.size
    fblp = None
    if req.scenario == "FBL":
        if req.bler is None or req.l_c is None:
            raise ValueError("FBL allocation needs bler and l_c")
        fblp = FblParams.create(req.bler, req.l_c, g)

    if req.solver == "lc":
        if req.bits is None:
            raise ValueError("the lc solver needs a fixed bit vector")
        bits = np.asarray(req.bits, dtype=int)
        df = req.spb * req.df0
        power_sum = req.p_tot / req.spb
        if fblp is None:
            powers, y = power_solve_fixed_bits(bits, gains, req.d, df, req.sigma2, power_sum)
        else:
            powers, y = lc_power_fbl(bits, gains, fblp, req.d, df, req.df0, req.sigma2, power_sum)
        return AllocateResponse(
            bits_cont=[float(b) for b in bits],
            bits_int=[int(b) for b in bits],
            powers=[float(p) for p in powers],
            y=float(y),
            nu=None,
            tau=None,
            objective=float(y),
            feasible=True,
            iterations=[],
            diagnostics={"solver": "lc", "wall_time_s": time.perf_counter() - t_start},
        )

    if req.weights is None:
        raise ValueError("the bcd solver needs per-patch weights")
    problem = AllocProblem(
        eq_gains=gains,
        weights=np.asarray(req.weights, dtype=float),
        d=req.d,
        b_target=req.b_target,
        b_min=req.b_min,
        b_max=req.b_max,
        df0=req.df0,
        spb=req.spb,
        sigma2=req.sigma2,
        p_tot=req.p_tot,
        u_min=req.u_min,
        u_max=req.u_max,
        k_iters=req.k_iters,
    )
    scores = None if req.scores is None else np.asarray(req.scores, dtype=float)
    if fblp is None:
        result = bcd_solve(problem, scores=scores)
    else:
        result = bcd_solve_fbl(problem, fblp, scores=scores)
    data = result.to_dict()
    diagnostics = dict(data["diagnostics"])
    diagnostics["wall_time_s"] = time.perf_counter() - t_start
    diagnostics["settings"] = data["settings"]
    return AllocateResponse(
        bits_cont=data["bits_cont"],
        bits_int=data["bits_int"],
        powers=data["powers"],
        y=data["y"],
        nu=None if not np.isfinite(data["nu"]) else data["nu"],
        tau=None if not np.isfinite(data["tau"]) else data["tau"],
        objective=data["objective"],
        feasible=data["feasible"],
        iterations=data["iterations"],
        diagnostics=diagnostics,
    )


def handle_simulate(req: SimulateRequest) -> ResultRowModel:
    config = config_from_model(req.config)
    image = None
    if req.use_synthetic_image:
        image = synthetic_image(config.height, config.width, config.channels, config.patch, config.seed_base)
    row = run_method(
        config,
        req.trial,
        method=req.method,
        policy=req.policy,
        snr_db=req.snr_db,
        rho=req.rho,
        bler=req.bler,
        image=image,
    )
    return ResultRowModel(**row.__dict__)


def handle_sweep(req: SweepRequest) -> SweepResponse:
    config = config_from_model(req.config)
    rows = sweep(config)
    buf = io.StringIO()
    import csv as _csv

    writer = _csv.DictWriter(buf, fieldnames=CSV_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row.to_csv_dict())
    return SweepResponse(csv=buf.getvalue(), n_rows=len(rows))


def handle_quantize(req: QuantizeRequest) -> QuantizeResponse:
    arr = np.load(io.BytesIO(base64.b64decode(req.image_npy_b64)))
    image = PatchImage.from_array(arr, req.patch)
    q = quantize(image, np.asarray(req.bits, dtype=int))
    return QuantizeResponse(
        payload_b64=base64.b64encode(serialize_payload(q)).decode("ascii"),
        n_bits=q.n_bits,
        u_min=q.u_min,
        u_max=q.u_max,
    )


def handle_dequantize(req: DequantizeRequest) -> DequantizeResponse:
    q = deserialize_payload(base64.b64decode(req.payload_b64))
    recon = dequantize(q)
    buf = io.BytesIO()
    np.save(buf, recon.values)
    value = None
    if req.original_npy_b64:
        orig = PatchImage.from_array(np.load(io.BytesIO(base64.b64decode(req.original_npy_b64))), q.patch)
        value = psnr(orig, recon)
    return DequantizeResponse(image_npy_b64=base64.b64encode(buf.getvalue()).decode("ascii"), psnr_db=value)


def handle_synth_profile(req: SynthProfileRequest) -> ProfileModel:
    profile = synthetic_profile(req.g, req.kind, req.seed)
    side = int(round(req.g**0.5))
    grid = [side, side] if side * side == req.g else [1, req.g]
    if profile.patch_grid is not None:
        grid = list(profile.patch_grid)
    return ProfileModel(g=profile.g, patch_grid=grid, scores=[float(s) for s in profile.scores], source=profile.source)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def _wrap(handler, request):
    try:
        return handler(request)
    except (ValueError, AllocationError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/allocate", response_model=AllocateResponse)
def allocate(request: AllocateRequest) -> AllocateResponse:
    return _wrap(handle_allocate, request)


@app.post("/simulate", response_model=ResultRowModel)
def simulate(request: SimulateRequest) -> ResultRowModel:
    return _wrap(handle_simulate, request)


@app.post("/sweep", response_model=SweepResponse)
def run_sweep(request: SweepRequest) -> SweepResponse:
    return _wrap(handle_sweep, request)


@app.post("/quantize", response_model=QuantizeResponse)
def quantize_image(request: QuantizeRequest) -> QuantizeResponse:
    return _wrap(handle_quantize, request)


@app.post("/dequantize", response_model=DequantizeResponse)
def dequantize_image(request: DequantizeRequest) -> DequantizeResponse:
    return _wrap(handle_dequantize, request)


@app.post("/profile/synth", response_model=ProfileModel)
def synth_profile(request: SynthProfileRequest) -> ProfileModel:
    return _wrap(handle_synth_profile, request)
