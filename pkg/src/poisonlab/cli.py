"""Thin command-line client for the poisonlab service.

Without --server the commands talk to an in-process instance of the app
over ASGI, so no running server is needed; with --server they hit a remote
instance (start one with `poisonlab serve`).
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .config import apply_overrides, load_config


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process: drive the ASGI app directly, no server needed
    from starlette.testclient import TestClient

    from .service import app

    return TestClient(app)


def _call(ctx, endpoint: str, payload: dict) -> dict:
    with _client(ctx.obj["server"]) as client:
        resp = client.post(endpoint, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"{endpoint}: {detail}")
    return resp.json()


def _parse_set(pairs) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            overrides[key] = json.loads(raw)
        except ValueError:
            overrides[key] = raw
    return overrides


def _config_payload(config_path, sets, extra: dict | None = None) -> dict:
    cfg = load_config(config_path)
    cfg = apply_overrides(cfg, _parse_set(sets))
    if extra:
        cfg = apply_overrides(cfg, extra)
    return cfg


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="YAML experiment config."),
    click.option("--set", "sets", multiple=True,
                 help="Override a config key, e.g. --set strategy.alpha=0.01"),
]


def _with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
@click.option("--server", default=None,
              help="Base URL of a running service; default is in-process.")
@click.pass_context
def main(ctx, server):
    """Backdoor-poisoning attack simulator."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@_with_common
@click.option("--strategy", default=None,
              help="random | fus | lps (overrides strategy.name).")
@click.option("--alpha", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "mask_path", required=True,
              help="Mask file to write.")
@click.option("--trace", "trace_path", default=None,
              help="JSON-lines per-iteration diagnostics file.")
@click.pass_context
def select(ctx, config_path, sets, strategy, alpha, seed, mask_path,
           trace_path):
    """Run a selection strategy and emit a mask file."""
    extra = {}
    if strategy is not None:
        extra["strategy.name"] = strategy
    if alpha is not None:
        extra["strategy.alpha"] = alpha
    if seed is not None:
        extra["strategy.seed"] = seed
    cfg = _config_payload(config_path, sets, extra)
    out = _call(ctx, "/select", {"config": cfg, "mask_path": mask_path,
                                 "trace_path": trace_path})
    click.echo(f"{out['strategy']}: selected {len(out['selected_indices'])} "
               f"of budget {out['budget']} -> {out['mask_path']}")


@main.command()
@_with_common
@click.option("--mask", "mask_path", required=True)
@click.option("--out", "output_csv", required=True)
@click.pass_context
def poison(ctx, config_path, sets, mask_path, output_csv):
    """Materialize the poisoned dataset as a CSV."""
    cfg = _config_payload(config_path, sets)
    out = _call(ctx, "/poison", {"config": cfg, "mask_path": mask_path,
                                 "output_csv": output_csv})
    click.echo(f"poisoned {out['poisoned_count']}/{out['dataset_size']} "
               f"samples -> {out['output_csv']}")


@main.command(name="train")
@_with_common
@click.option("--mask", "mask_path", default=None,
              help="Train on the poisoned dataset defined by this mask.")
@click.option("--out", "checkpoint_path", required=True)
@click.pass_context
def train_cmd(ctx, config_path, sets, mask_path, checkpoint_path):
    """Train a target model, optionally on poisoned data."""
    cfg = _config_payload(config_path, sets)
    out = _call(ctx, "/train", {"config": cfg, "mask_path": mask_path,
                                "checkpoint_path": checkpoint_path})
    click.echo(f"trained {out['epochs']} epochs, "
               f"loss {out['final_train_loss']:.4f}, "
               f"acc {out['final_train_accuracy']:.4f} "
               f"-> {out['checkpoint_path']}")


@main.command()
@_with_common
@click.option("--checkpoint", "checkpoint_path", required=True)
@click.pass_context
def evaluate(ctx, config_path, sets, checkpoint_path):
    """Report clean accuracy and attack success rate of a checkpoint."""
    cfg = _config_payload(config_path, sets)
    out = _call(ctx, "/evaluate", {"config": cfg,
                                   "checkpoint_path": checkpoint_path})
    click.echo(f"acc={out['clean_accuracy']:.4f} "
               f"asr={out['attack_success_rate']:.4f}")


@main.command()
@_with_common
@click.pass_context
def sweep(ctx, config_path, sets):
    """Run the configured strategy x alpha x seed grid."""
    cfg = _config_payload(config_path, sets)
    out = _call(ctx, "/sweep", {"config": cfg})
    click.echo(f"{len(out['new_results'])} new cells, "
               f"{out['skipped_existing']} skipped, "
               f"{len(out['errors'])} errors -> {out['csv_path']}")
    if out.get("timing"):
        click.echo(json.dumps(out["timing"], indent=2))


@main.command()
@click.option("--inner-instances", type=int, default=200)
@click.option("--gradient-models", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.pass_context
def verify(ctx, inner_instances, gradient_models, seed):
    """Run the brute-force and gradient oracles."""
    out = _call(ctx, "/verify", {"inner_instances": inner_instances,
                                 "gradient_models": gradient_models,
                                 "seed": seed})
    click.echo(json.dumps(out, indent=2))
    if not out["passed"]:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("poisonlab.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
