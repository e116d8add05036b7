"""Command-line client for the spfti service.

Every subcommand issues one HTTP request against a running service (start
one with ``spfti serve``).  Passing ``--server inprocess`` routes requests
through the application object in this process instead, which makes one-off
runs possible without a daemon.
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

DEFAULT_SERVER = "http://127.0.0.1:8000"


def make_client(server: str) -> httpx.Client:
    if server == "inprocess":
        # synchronous in-process ASGI bridge; no daemon required
        from fastapi.testclient import TestClient

        from .service import app

        return TestClient(app)
    return httpx.Client(base_url=server, timeout=None)


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    with make_client(ctx.obj["server"]) as client:
        try:
            resp = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"request to {path} failed: {exc}") from exc
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"{path} -> HTTP {resp.status_code}: {detail}")
    return resp.json()


def _echo(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


@click.group()
@click.option(
    "--server",
    default=lambda: os.environ.get("SPFTI_SERVER", DEFAULT_SERVER),
    show_default=DEFAULT_SERVER,
    help="Service base URL, or 'inprocess' to run without a daemon.",
)
@click.pass_context
def main(ctx: click.Context, server: str) -> None:
    """Compressive single-pixel interferometric imaging toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("spfti.service:app", host=host, port=port)


@main.command()
@click.pass_context
def health(ctx: click.Context) -> None:
    """Check that the service answers."""
    with make_client(ctx.obj["server"]) as client:
        resp = client.get("/health")
    if resp.status_code != 200:
        raise click.ClickException(f"service unhealthy: HTTP {resp.status_code}")
    _echo(resp.json())


@main.command()
@click.option("--n-xi", type=int, required=True)
@click.option("--n-p-bar", type=int, required=True)
@click.option("--kappa-variant", type=click.Choice(["single_cap", "product"]), default="single_cap")
@click.option("--pmf-variant", type=click.Choice(["kappa_sq", "reciprocal", "uniform"]), default="kappa_sq")
@click.option("--output-dir", required=True)
@click.option("--images/--no-images", default=False, help="Also write per-OPD PGM slices.")
@click.pass_context
def coherence(ctx, n_xi, n_p_bar, kappa_variant, pmf_variant, output_dir, images) -> None:
    """Write coherence-bound and pmf tables (CSV, optionally PGM)."""
    _echo(
        _post(
            ctx,
            "/coherence",
            {
                "dims": {"n_xi": n_xi, "n_p_bar": n_p_bar},
                "kappa_variant": kappa_variant,
                "pmf_variant": pmf_variant,
                "output_dir": output_dir,
                "write_images": images,
            },
        )
    )


@main.command()
@click.option("--n-xi", type=int, required=True)
@click.option("--n-p-bar", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", "output_path", required=True)
@click.pass_context
def phantom(ctx, n_xi, n_p_bar, seed, output_path) -> None:
    """Generate the synthetic test volume."""
    _echo(
        _post(
            ctx,
            "/phantom",
            {"dims": {"n_xi": n_xi, "n_p_bar": n_p_bar}, "seed": seed, "output_path": output_path},
        )
    )


@main.command()
@click.option("--volume", "volume_path", required=True)
@click.option("--output", "output_path", required=True)
@click.option("--mode", type=click.Choice(["nyquist", "compressive"]), default="compressive")
@click.option("--ratio", type=float, default=None, help="Measurement count as a fraction of n_hs.")
@click.option("--m", type=int, default=None, help="Measurement count (alternative to --ratio).")
@click.option("--pmf-variant", type=click.Choice(["kappa_sq", "reciprocal", "uniform"]), default="kappa_sq")
@click.option("--kappa-variant", type=click.Choice(["single_cap", "product"]), default="product")
@click.option("--snr-db", type=float, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--plan-seed", type=int, default=0, show_default=True)
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.pass_context
def acquire(ctx, volume_path, output_path, mode, ratio, m, pmf_variant, kappa_variant, snr_db, sigma, plan_seed, noise_seed) -> None:
    """Simulate an acquisition and store the measurement set."""
    _echo(
        _post(
            ctx,
            "/acquire",
            {
                "volume_path": volume_path,
                "output_path": output_path,
                "mode": mode,
                "ratio": ratio,
                "m": m,
                "pmf_variant": pmf_variant,
                "kappa_variant": kappa_variant,
                "snr_db": snr_db,
                "sigma": sigma,
                "plan_seed": plan_seed,
                "noise_seed": noise_seed,
            },
        )
    )


@main.command()
@click.option("--measurements", "measurement_path", required=True)
@click.option("--output", "output_path", required=True)
@click.option("--method", type=click.Choice(["bpdn", "me"]), default="bpdn")
@click.option("--epsilon", type=float, default=None, help="Residual bound; omit to calibrate.")
@click.option("--max-iterations", type=int, default=1500, show_default=True)
@click.option("--reference", "reference_volume_path", default=None, help="Volume for RSNR report.")
@click.pass_context
def recover(ctx, measurement_path, output_path, method, epsilon, max_iterations, reference_volume_path) -> None:
    """Reconstruct a volume from stored measurements."""
    data = _post(
        ctx,
        "/recover",
        {
            "measurement_path": measurement_path,
            "output_path": output_path,
            "method": method,
            "epsilon": epsilon,
            "solver": {"max_iterations": max_iterations},
            "reference_volume_path": reference_volume_path,
        },
    )
    _echo(data)
    if not data["converged"]:
        sys.exit(1)


@main.command()
@click.option("--n-xi", type=int, required=True)
@click.option("--n-p-bar", type=int, required=True)
@click.option("--m", type=float, required=True)
@click.pass_context
def exposure(ctx, n_xi, n_p_bar, m) -> None:
    """Report the illumination dose of an m-measurement scan."""
    _echo(_post(ctx, "/exposure", {"dims": {"n_xi": n_xi, "n_p_bar": n_p_bar}, "m": m}))


@main.command()
@click.option("--config", "config_path", default=None, help="Path to a key-value config file.")
@click.option("--preset", default=None, help="Named preset (default, paper-scale, smoke).")
@click.option("--output-dir", required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--volume", "volume_path", default=None, help="Use this volume instead of a phantom.")
@click.pass_context
def experiment(ctx, config_path, preset, output_dir, seed, volume_path) -> None:
    """Run a ratio/SNR sweep; exit code 0 only if every run converged."""
    data = _post(
        ctx,
        "/experiment",
        {
            "config_path": config_path,
            "preset": preset,
            "output_dir": output_dir,
            "seed": seed,
            "volume_path": volume_path,
        },
    )
    _echo(data)
    if not data["all_converged"]:
        click.echo("warning: some runs did not converge", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
