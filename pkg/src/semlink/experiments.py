"""Experiment harness: method dispatch, trials, sweeps and CSV emission.

Transmit SNR convention: a point at s dB sets sigma2 = p_tot / 10^(s/10)
(total-power reference, the default). The alternate "subchannel" reference
sets sigma2 = (p_tot / N_s F) / 10^(s/10); every result row records which
reference produced it together with the realized sigma2, so points can be
rescaled between conventions.

Every row is reproducible from (config, trial) alone: the channel uses seed
``seed_base + trial`` and the mapping and error-injection draws use fixed
substreams of the same seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from . import baselines
from .fbl import FblParams, bcd_solve_fbl, lc_power_fbl, penalty_coeff, dispersion_exact
from .ideal import AllocProblem, AllocationError, bcd_solve, power_solve_fixed_bits
from .importance import ImportanceProfile, WeightVector, compute_weights, load_profile, synthetic_profile, topbeta_bits
from .link import LinkConfig, generate_channel, make_rng
from .mapping import build_mapping
from .metrics import (
    achieved_ber,
    ber_from_bler,
    fbl_inference_latency,
    inference_latency,
    latency_bound,
)
from .quantizer import (
    PatchImage,
    QuantizedImage,
    dequantize,
    inject_bit_errors,
    load_image,
    psnr,
    quantize,
    unpack_codes,
    weighted_distortion,
    weighted_error_bound,
)

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "ResultRow",
    "run_method",
    "sweep",
    "write_csv",
    "synthetic_image",
    "CSV_FIELDS",
]

METHODS = (
    "IA_QSMPA",
    "IA_QSMPA_LC",
    "MOD_IA_QSMPA",
    "MOD_IA_QSMPA_LC",
    "FIXED_BP",
    "FIXED_B_WF",
    "FIXED_P_IAQ",
    "FIXED_P_TOPBETA",
)

SCHEMA_VERSION = 1

CSV_FIELDS = [
    "schema",
    "method",
    "policy",
    "scenario",
    "snr_db",
    "snr_ref",
    "sigma2",
    "rho",
    "bler",
    "trial",
    "seed",
    "t_d",
    "objective",
    "e_q",
    "weighted_distortion",
    "psnr_db",
    "bits_total",
    "power_total",
    "feasible",
    "coherence_ok",
]


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    scenario: str = "IDEAL"
    method: str = "IA_QSMPA"
    methods: tuple[str, ...] | None = None
    mapping_policy: str = "IASM"
    rho: tuple[float, ...] = (0.25,)
    tx_snr_db: tuple[float, ...] = (20.0,)
    bler: tuple[float, ...] = (0.01,)
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

    def __post_init__(self):
        if self.scenario not in ("IDEAL", "FBL"):
            raise ValueError("scenario must be IDEAL or FBL")
        for m in (self.method,) + tuple(self.methods or ()):
            if m not in METHODS:
                raise ValueError(f"unknown method {m}")
        if self.snr_ref not in ("total", "subchannel"):
            raise ValueError("snr_ref must be 'total' or 'subchannel'")
        if self.ber_model not in ("target", "achieved"):
            raise ValueError("ber_model must be 'target' or 'achieved'")
        grid_g = (self.height // self.patch) * (self.width // self.patch)
        if self.height % self.patch or self.width % self.patch:
            raise ValueError("patch must divide height and width")
        if grid_g != self.link.g:
            raise ValueError(f"patch grid gives {grid_g} patches but link.g = {self.link.g}")
        for r in self.rho:
            self.b_target_for(r)  # raises if invalid

    @property
    def d(self) -> int:
        return self.patch * self.patch * self.channels

    def b_target_for(self, rho: float) -> int:
        raw = rho * 8 * self.height * self.width * self.channels
        b_target = int(round(raw))
        if abs(raw - b_target) > 1e-6:
            raise ValueError(f"rho={rho} does not give an integer bit budget")
        if b_target % self.d != 0:
            raise ValueError(f"bit budget {b_target} is not a multiple of d={self.d}")
        g = self.link.g
        if not self.b_min * g * self.d <= b_target <= self.b_max * g * self.d:
            raise ValueError(f"bit budget {b_target} outside the representable range")
        return b_target

    def sigma2_for(self, snr_db: float) -> float:
        ref = self.link.p_tot if self.snr_ref == "total" else self.link.p_tot / self.link.n_subchannels
        return ref / 10.0 ** (snr_db / 10.0)

    def method_list(self) -> tuple[str, ...]:
        return self.methods if self.methods else (self.method,)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["link"] = asdict(self.link)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        link = LinkConfig(**data.pop("link", {}))
        for key in ("rho", "tx_snr_db", "bler"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        if data.get("methods") is not None:
            data["methods"] = tuple(data["methods"])
        return cls(link=link, **data)


@dataclass
class ResultRow:
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

    def to_csv_dict(self) -> dict:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, bool):
                return int(x)
            if isinstance(x, float):
                return repr(x)
            return x

        out = {"schema": SCHEMA_VERSION}
        for name in CSV_FIELDS[1:]:
            out[name] = fmt(getattr(self, name))
        return out


def synthetic_image(height: int, width: int, channels: int, patch: int, seed: int = 0) -> PatchImage:
    """Smooth structured test image in [0, 1] for image-free configurations."""
    rng = make_rng(seed, 4)
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    img = np.empty((height, width, channels))
    for c in range(channels):
        a, b, ph = rng.uniform(1, 4, 3)
        img[:, :, c] = 0.5 + 0.25 * np.sin(2 * np.pi * (a * xx + b * yy) + ph)
        img[:, :, c] += 0.15 * rng.standard_normal((height, width))
    img = np.clip(img, 0.0, 1.0)
    return PatchImage.from_array(img, patch)


def _profile_for(config: ExperimentConfig) -> ImportanceProfile:
    if config.importance_file:
        return load_profile(config.importance_file)
    return synthetic_profile(config.link.g, config.importance_kind, config.seed_base)


def _weights_for(config: ExperimentConfig, profile: ImportanceProfile) -> WeightVector:
    if config.weight_override is not None:
        w = np.full(profile.g, float(config.weight_override))
        return WeightVector(weights=w, delta=config.delta, d_c=config.d_c)
    return compute_weights(profile, config.delta, config.d_c)


def _block_order_powers(mapping, per_subchannel_flat: np.ndarray, n_s: int) -> np.ndarray:
    """Arrange flat per-(f, r) powers into (G, spb) block member order."""
    f = mapping.block_members[..., 0]
    r = mapping.block_members[..., 1]
    return per_subchannel_flat[f * n_s + r]


def _design_latency(bits, powers, lam, d, df, sigma2, scenario, fblp, g):
    if scenario == "IDEAL":
        return latency_bound(bits, powers, lam, d, df, sigma2)
    bits = np.asarray(bits, dtype=float)
    gamma = np.asarray(powers) * np.asarray(lam) ** 2 / sigma2
    pen = np.broadcast_to(penalty_coeff(fblp.bler if fblp.bler.size == g else fblp.bler[0], fblp.l_c), (g,))
    rates = df * (np.log2(1.0 + gamma) - pen * dispersion_exact(gamma))
    lat = np.where(bits > 0, np.where(rates > 0, d * bits / np.where(rates > 0, rates, 1.0), np.inf), 0.0)
    return float(np.max(lat))


def run_method(
    config: ExperimentConfig,
    trial: int,
    *,
    method: str | None = None,
    policy: str | None = None,
    snr_db: float | None = None,
    rho: float | None = None,
    bler: float | None = None,
    image: PatchImage | None = None,
    channel=None,
) -> ResultRow:
    """Run one (method, operating point, trial) and measure everything.

    ``channel`` replays a stored realization instead of drawing one, matching
    the gain dump/load interface.
    """
    t_start = time.perf_counter()
    method = method or config.method
    policy = policy or config.mapping_policy
    snr_db = config.tx_snr_db[0] if snr_db is None else snr_db
    rho = config.rho[0] if rho is None else rho
    if config.scenario == "FBL":
        bler = config.bler[0] if bler is None else bler
    sigma2 = config.sigma2_for(snr_db)
    link = replace(config.link, sigma2=sigma2)
    seed = config.seed_base + trial
    g, d = link.g, config.d

    if channel is None:
        channel = generate_channel(link, seed)
    profile = _profile_for(config)
    weights = _weights_for(config, profile)
    mapping = build_mapping(channel, profile, policy, seed)
    lam = mapping.patch_gains()
    b_target = config.b_target_for(rho)
    target_pb = b_target // d

    if image is None and config.image_path:
        image = load_image(config.image_path, config.patch)
    u_min, u_max = (image.u_min, image.u_max) if image is not None else (0.0, 1.0)

    fblp = FblParams.create(bler, link.symbol_budget, g) if config.scenario == "FBL" else None

    w = weights.weights
    scores = profile.scores
    df = link.block_bandwidth
    power_sum = link.power_sum
    feasible = True
    per_sub_powers = None  # (G, spb) override for non-uniform in-block power

    try:
        if method in ("IA_QSMPA", "MOD_IA_QSMPA"):
            problem = AllocProblem(
                eq_gains=lam, weights=w, d=d, b_target=b_target, b_min=config.b_min,
                b_max=config.b_max, df0=link.df0, spb=link.subchannels_per_block,
                sigma2=sigma2, p_tot=link.p_tot, u_min=u_min, u_max=u_max, k_iters=config.k_iters,
            )
            if method == "MOD_IA_QSMPA":
                if fblp is None:
                    raise ValueError("MOD_IA_QSMPA requires the FBL scenario")
                result = bcd_solve_fbl(problem, fblp, scores=scores)
            else:
                result = bcd_solve(problem, scores=scores)
            bits, powers, y_design = result.bits_int, result.powers, result.y
        elif method in ("IA_QSMPA_LC", "MOD_IA_QSMPA_LC"):
            beta = baselines.beta_from_rho(target_pb, g, config.b_min, config.b_max)
            bits = topbeta_bits(profile, beta, config.b_min, config.b_max)
            if method == "MOD_IA_QSMPA_LC":
                if fblp is None:
                    raise ValueError("MOD_IA_QSMPA_LC requires the FBL scenario")
                powers, y_design = lc_power_fbl(
                    bits, lam, fblp, d, df, link.df0, sigma2, power_sum
                )
            else:
                powers, y_design = power_solve_fixed_bits(bits, lam, d, df, sigma2, power_sum)
        elif method == "FIXED_BP":
            bits = baselines.uniform_bits(target_pb, g, config.b_min, config.b_max, scores)
            powers = np.full(g, power_sum / g)
            y_design = _design_latency(bits, powers, lam, d, df, sigma2, config.scenario, fblp, g)
        elif method == "FIXED_B_WF":
            bits = baselines.uniform_bits(target_pb, g, config.b_min, config.b_max, scores)
            flat_powers = baselines.water_filling(channel.gains.ravel(), sigma2, link.p_tot)
            per_sub_powers = _block_order_powers(mapping, flat_powers, link.n_s)
            powers = per_sub_powers.mean(axis=1)[mapping.patch_to_block]
            y_design = _design_latency(bits, powers, lam, d, df, sigma2, config.scenario, fblp, g)
        elif method == "FIXED_P_IAQ":
            bits = baselines.importance_bits(
                w, scores, target_pb, config.b_min, config.b_max, u_max - u_min
            )
            powers = np.full(g, power_sum / g)
            y_design = _design_latency(bits, powers, lam, d, df, sigma2, config.scenario, fblp, g)
        elif method == "FIXED_P_TOPBETA":
            beta = baselines.beta_from_rho(target_pb, g, config.b_min, config.b_max)
            bits = topbeta_bits(profile, beta, config.b_min, config.b_max)
            powers = np.full(g, power_sum / g)
            y_design = _design_latency(bits, powers, lam, d, df, sigma2, config.scenario, fblp, g)
        else:
            raise ValueError(f"unknown method {method}")
    except AllocationError:
        feasible = False
        bits = np.full(g, config.b_min, dtype=int)
        powers = np.full(g, power_sum / g)
        y_design = float("inf")

    e_q = weighted_error_bound(bits, w, d, u_min, u_max)
    metric_powers = per_sub_powers if per_sub_powers is not None else powers
    if config.scenario == "FBL":
        report = fbl_inference_latency(
            mapping, channel, bits, metric_powers, fblp, d, link.df0, sigma2, link.t_coh
        )
    else:
        report = inference_latency(
            mapping, channel, bits, metric_powers, d, link.df0, sigma2, link.t_coh
        )

    wdist = psnr_db = None
    if image is not None:
        q = quantize(image, bits)
        if config.scenario == "FBL" and feasible:
            if config.ber_model == "achieved":
                gamma = np.asarray(powers) * lam**2 / sigma2
                rate = d * np.asarray(bits, dtype=float) / fblp.l_c
                bers = achieved_ber(gamma, rate, fblp.l_c, config.gamma_corr)
            else:
                bers = np.broadcast_to(
                    ber_from_bler(fblp.bler if fblp.bler.size == g else fblp.bler[0], fblp.l_c, config.gamma_corr),
                    (g,),
                )
            payload = inject_bit_errors(q.packed, q.n_bits, bers, q.block_bit_spans(), seed)
            codes = unpack_codes(payload, q.bits, d)
            q = QuantizedImage(
                codes=codes, bits=q.bits, u_min=q.u_min, u_max=q.u_max,
                shape=q.shape, patch=q.patch, packed=payload,
            )
        recon = dequantize(q)
        wdist = weighted_distortion(image, recon, w)
        psnr_db = psnr(image, recon)

    return ResultRow(
        method=method,
        policy=policy,
        scenario=config.scenario,
        snr_db=float(snr_db),
        snr_ref=config.snr_ref,
        sigma2=float(sigma2),
        rho=float(rho),
        bler=None if bler is None else float(bler),
        trial=int(trial),
        seed=int(seed),
        t_d=float(report.worst_case),
        objective=float(y_design + e_q),
        e_q=float(e_q),
        weighted_distortion=wdist,
        psnr_db=psnr_db,
        bits_total=int(d * int(np.sum(bits))),
        power_total=float(np.sum(np.asarray(metric_powers)) * (1 if per_sub_powers is not None else link.subchannels_per_block)),
        feasible=feasible,
        coherence_ok=bool(report.coherence_ok),
        wall_time_s=time.perf_counter() - t_start,
    )


def sweep(config: ExperimentConfig, out_path=None, image: PatchImage | None = None) -> list[ResultRow]:
    """Cartesian product over methods, SNR points, ratios, BLER targets and trials.

    Rows stream to ``out_path`` as they finish when a path is given. The CSV
    holds everything needed to reproduce a row except wall time, which is
    intentionally left out to keep re-runs byte-identical.
    """
    rows: list[ResultRow] = []
    blers: tuple = config.bler if config.scenario == "FBL" else (None,)
    writer = None
    fh = None
    try:
        if out_path is not None:
            fh = open(out_path, "w", newline="", encoding="utf-8")
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
        for method in config.method_list():
            for snr_db in config.tx_snr_db:
                for rho in config.rho:
                    for bler in blers:
                        for trial in range(config.n_trials):
                            row = run_method(
                                config, trial, method=method, snr_db=snr_db, rho=rho, bler=bler, image=image
                            )
                            rows.append(row)
                            if writer is not None:
                                writer.writerow(row.to_csv_dict())
                                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return rows


def write_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_csv_dict())


def write_manifest(config: ExperimentConfig, path) -> None:
    """Run manifest: full config plus content hashes of the file inputs."""
    manifest = {"schema": SCHEMA_VERSION, "config": config.to_dict(), "inputs": {}}
    for label, p in (("importance_file", config.importance_file), ("image_path", config.image_path)):
        if p:
            digest = hashlib.sha256(open(p, "rb").read()).hexdigest()
            manifest["inputs"][label] = {"path": str(p), "sha256": digest}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
