"""Command-line surface: train the two toy models and serve the exchange."""

from __future__ import annotations

import functools
import json

import click

from .config import TrainConfig
from .errors import TrainkitError
from .serve import ExchangeServer, load_model
from .train import train_patch_model, train_reconnect_model


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainkitError as e:
            payload = {"error": {"type": type(e).__name__, "message": str(e)}}
            click.echo(json.dumps(payload, sort_keys=True), err=True)
            raise SystemExit(1)
    return wrapper


@click.group()
def main():
    """Train toy patch-segmentation / reconnection models and serve them."""


def _train_options(fn):
    for opt in reversed([
        click.option("--corpus", required=True, type=click.Path(exists=True)),
        click.option("--out", required=True, type=click.Path()),
        click.option("--epochs", type=int, default=100, show_default=True),
        click.option("--batch-size", type=int, default=2, show_default=True),
        click.option("--learning-rate", type=float, default=1e-4,
                     show_default=True),
        click.option("--dropout", type=float, default=0.2, show_default=True),
        click.option("--bg-weight", type=float, default=0.5,
                     show_default=True),
        click.option("--patience", type=int, default=10, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
    ]):
        fn = opt(fn)
    return fn


@main.command("train-patch")
@_train_options
@click.option("--patch-size", type=int, default=64, show_default=True)
@click.option("--patches-per-image", type=int, default=8, show_default=True)
@_guarded
def train_patch(corpus, out, patch_size, patches_per_image, **hp):
    """Train the image patch -> mask patch segmenter."""
    cfg = TrainConfig(corpus_dir=corpus, out_dir=out, patch_size=patch_size,
                      patches_per_image=patches_per_image, **hp)
    path = train_patch_model(cfg)
    click.echo(f"wrote {path}")


@main.command("train-reconnect")
@_train_options
@click.option("--frags", required=True, type=click.Path(exists=True))
@click.option("--train-size", type=int, default=128, show_default=True)
@_guarded
def train_reconnect(corpus, out, frags, train_size, **hp):
    """Train the fragmented mask -> full mask reconnection model."""
    cfg = TrainConfig(corpus_dir=corpus, out_dir=out, frags_dir=frags,
                      train_size=train_size, **hp)
    path = train_reconnect_model(cfg)
    click.echo(f"wrote {path}")


@main.command()
@click.option("--exchange", required=True, type=click.Path())
@click.option("--patch-model", type=click.Path(exists=True), default=None)
@click.option("--full-model", type=click.Path(exists=True), default=None)
@click.option("--reconnect-model", type=click.Path(exists=True), default=None)
@click.option("--reconnect-size", type=int, default=None,
              help="Resize reconnect inputs to this edge before inference.")
@click.option("--echo", is_flag=True, help="Answer requests with their own payload.")
@click.option("--max-requests", type=int, default=None,
              help="Stop after answering this many requests.")
@click.option("--poll", "poll_s", type=float, default=0.05, show_default=True)
@_guarded
def serve(exchange, patch_model, full_model, reconnect_model, reconnect_size,
          echo, max_requests, poll_s):
    """Serve exchange requests until interrupted."""
    models = {}
    if patch_model:
        models["patch"] = load_model(patch_model)
    if full_model:
        models["full"] = load_model(full_model)
    if reconnect_model:
        models["reconnect"] = load_model(reconnect_model)
    server = ExchangeServer(exchange, models=models, echo=echo,
                            reconnect_size=reconnect_size)
    served = server.serve_forever(poll_s=poll_s, max_requests=max_requests)
    click.echo(f"served {served} requests")


if __name__ == "__main__":
    main()
