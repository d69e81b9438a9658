"""Request/response models for the allocation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class LinkModel(BaseModel):
    n_tx: int = 4
    n_rx: int = 4
    n_s: int = 4
    f: int = 784
    t_coh: int = 50
    df0: float = 15e3
    sigma2: float = 1.0
    sigma_h2: float = 1.0
    p_tot: float = 3136.0
    g: int = 196


class ExperimentConfigModel(BaseModel):
    link: LinkModel = Field(default_factory=LinkModel)
    scenario: str = "IDEAL"
    method: str = "IA_QSMPA"
    methods: list[str] | None = None
    mapping_policy: str = "IASM"
    rho: list[float] = [0.25]
    tx_snr_db: list[float] = [20.0]
    bler: list[float] = [0.01]
    n_trials: int = 20
    seed_base: int = 0
    importance_file: str | None = None
    importance_kind: str = "ramp"
    image_path: str | None = None
    weight_override: float | None = None
    delta: float = 1.0
    d_c: float = 1e-7
    b_min: int = 1
    b_max: int = 8
    k_iters: int = 5
    gamma_corr: float = 10.0
    height: int = 224
    width: int = 224
    channels: int = 3
    patch: int = 16
    snr_ref: str = "total"
    ber_model: str = "target"


class AllocateRequest(BaseModel):
    """One allocation problem over explicit per-patch gains and weights."""

    scenario: str = "IDEAL"
    solver: str = "bcd"  # "bcd" joint, or "lc" power-only for fixed bits
    eq_gains: list[float]
    weights: list[float] | None = None
    scores: list[float] | None = None
    bits: list[int] | None = None  # required by the "lc" solver
    d: int = 1
    b_target: int = 0
    b_min: int = 1
    b_max: int = 8
    df0: float = 15e3
    spb: int = 1
    sigma2: float = 1.0
    p_tot: float = 1.0
    u_min: float = 0.0
    u_max: float = 1.0
    k_iters: int = 5
    bler: float | list[float] | None = None
    l_c: float | None = None


class AllocateResponse(BaseModel):
    bits_cont: list[float]
    bits_int: list[int]
    powers: list[float]
    y: float
    nu: float | None
    tau: float | None
    objective: float
    feasible: bool
    iterations: list[dict]
    diagnostics: dict


class SimulateRequest(BaseModel):
    config: ExperimentConfigModel
    trial: int = 0
    method: str | None = None
    policy: str | None = None
    snr_db: float | None = None
    rho: float | None = None
    bler: float | None = None
    use_synthetic_image: bool = False


class ResultRowModel(BaseModel):
    method: str
    policy: str
    scenario: str
    snr_db: float
    snr_ref: str
    sigma2: float
    rho: float
    bler: float | None
    trial: int
    seed: int
    t_d: float
    objective: float
    e_q: float
    weighted_distortion: float | None
    psnr_db: float | None
    bits_total: int
    power_total: float
    feasible: bool
    coherence_ok: bool
    wall_time_s: float


class SweepRequest(BaseModel):
    config: ExperimentConfigModel


class SweepResponse(BaseModel):
    csv: str
    n_rows: int


class QuantizeRequest(BaseModel):
    image_npy_b64: str  # base64 of an .npy float tensor (H, W, C)
    patch: int = 16
    bits: list[int]


class QuantizeResponse(BaseModel):
    payload_b64: str
    n_bits: int
    u_min: float
    u_max: float


class DequantizeRequest(BaseModel):
    payload_b64: str
    original_npy_b64: str | None = None


class DequantizeResponse(BaseModel):
    image_npy_b64: str
    psnr_db: float | None


class SynthProfileRequest(BaseModel):
    g: int = 196
    kind: str = "ramp"
    seed: int = 0


class ProfileModel(BaseModel):
    g: int
    patch_grid: list[int]
    scores: list[float]
    source: str
