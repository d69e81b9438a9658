"""Command-line client.

Every subcommand builds the same request models the HTTP service accepts and
runs the shared handlers in-process; ``--server`` re-routes ``allocate`` and
``simulate`` to a running service instead.
"""

from __future__ import annotations

import base64
import io
import json

import click
import numpy as np

from . import __version__
from .experiments import ExperimentConfig, sweep, write_manifest
from .importance import save_profile, synthetic_profile
from .link import LinkConfig, generate_channel, save_gains
from .quantizer import load_image, save_image
from .service import schemas
from .service.app import (
    handle_allocate,
    handle_dequantize,
    handle_quantize,
    handle_simulate,
    handle_synth_profile,
)


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(server.rstrip("/") + route, json=payload, timeout=600.0)
    resp.raise_for_status()
    return resp.json()


def _load_config(path, **overrides) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


@click.group()
@click.version_option(__version__)
def main():
    """Importance-aware allocation for semantic transmission over MIMO-OFDM."""


@main.command()
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True), help="Problem JSON (AllocateRequest fields).")
@click.option("--server", default=None, help="Route through a running service instead of solving in-process.")
@click.option("--out", default=None, type=click.Path(), help="Write the result JSON here (default stdout).")
def allocate(problem_path, server, out):
    """Solve one joint allocation problem."""
    with open(problem_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if server:
        data = _post(server, "/allocate", payload)
    else:
        data = handle_allocate(schemas.AllocateRequest(**payload)).model_dump()
    text = json.dumps(data, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text)


@main.command(name="sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--seed", type=int, default=None, help="Override seed_base.")
@click.option("--trials", type=int, default=None, help="Override n_trials.")
@click.option("--manifest/--no-manifest", default=True)
def sweep_cmd(config_path, out, fmt, seed, trials, manifest):
    """Run the full experiment grid and write rows incrementally."""
    config = _load_config(config_path, seed_base=seed, n_trials=trials)
    if fmt == "csv":
        rows = sweep(config, out_path=out)
    else:
        rows = sweep(config)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump([row.__dict__ for row in rows], fh, indent=2)
    if manifest:
        write_manifest(config, str(out) + ".manifest.json")
    click.echo(f"wrote {len(rows)} rows to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--trial", type=int, default=0)
@click.option("--method", default=None)
@click.option("--policy", default=None)
@click.option("--snr-db", type=float, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--bler", type=float, default=None)
@click.option("--synthetic-image", "synthetic_flag", is_flag=True, help="Quantize a synthetic image through the full pipeline.")
@click.option("--server", default=None)
@click.option("--out", default=None, type=click.Path())
def simulate(config_path, trial, method, policy, snr_db, rho, bler, synthetic_flag, server, out):
    """Full pipeline for one trial: channel, mapping, allocation, metrics."""
    with open(config_path, "r", encoding="utf-8") as fh:
        config_data = json.load(fh)
    req = schemas.SimulateRequest(
        config=schemas.ExperimentConfigModel(**config_data),
        trial=trial,
        method=method,
        policy=policy,
        snr_db=snr_db,
        rho=rho,
        bler=bler,
        use_synthetic_image=synthetic_flag,
    )
    if server:
        data = _post(server, "/simulate", req.model_dump())
    else:
        data = handle_simulate(req).model_dump()
    text = json.dumps(data, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--bits-file", required=True, type=click.Path(exists=True), help="JSON list of per-patch depths.")
@click.option("--patch", type=int, default=16)
@click.option("--out", required=True, type=click.Path())
def quantize(image_path, bits_file, patch, out):
    """Quantize an image into a packed payload file."""
    image = load_image(image_path, patch)
    with open(bits_file, "r", encoding="utf-8") as fh:
        bits = json.load(fh)
    buf = io.BytesIO()
    np.save(buf, image.values)
    req = schemas.QuantizeRequest(
        image_npy_b64=base64.b64encode(buf.getvalue()).decode("ascii"), patch=patch, bits=bits
    )
    resp = handle_quantize(req)
    with open(out, "wb") as fh:
        fh.write(base64.b64decode(resp.payload_b64))
    click.echo(f"wrote {resp.n_bits} payload bits to {out}")


@main.command()
@click.option("--payload", "payload_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Reconstruction (.png or .npy).")
def dequantize(payload_path, out):
    """Reconstruct an image from a packed payload file."""
    with open(payload_path, "rb") as fh:
        blob = fh.read()
    resp = handle_dequantize(schemas.DequantizeRequest(payload_b64=base64.b64encode(blob).decode("ascii")))
    arr = np.load(io.BytesIO(base64.b64decode(resp.image_npy_b64)))
    from .quantizer import PatchImage

    save_image(out, PatchImage.from_array(arr, 1))
    click.echo(f"wrote reconstruction to {out}")


@main.command()
@click.option("--g", type=int, default=196)
@click.option("--dist", type=click.Choice(["uniform", "ramp", "heavytail"]), default="ramp")
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def synth(g, dist, seed, out):
    """Write a synthetic importance-profile JSON."""
    resp = handle_synth_profile(schemas.SynthProfileRequest(g=g, kind=dist, seed=seed))
    save_profile(out, synthetic_profile(g, dist, seed))
    click.echo(f"wrote profile for g={resp.g} to {out}")


@main.command()
@click.option("--link-config", "link_path", default=None, type=click.Path(exists=True), help="Link JSON; defaults to the standard setup.")
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path(), help="Gain dump (.csv or .npy).")
def channel(link_path, seed, out):
    """Draw one channel realization and dump its subchannel gains."""
    if link_path:
        with open(link_path, "r", encoding="utf-8") as fh:
            link = LinkConfig(**json.load(fh))
    else:
        link = LinkConfig()
    save_gains(out, generate_channel(link, seed))
    click.echo(f"wrote gains for seed {seed} to {out}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("semlink.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
