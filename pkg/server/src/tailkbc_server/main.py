"""CLI entry point: configure and serve the inference sidecar."""

from __future__ import annotations

import click
import uvicorn

from .app import create_app
from .config import load_config


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON config file; flags override its fields.")
@click.option("--qa-model", default=None, help="QA checkpoint id, or 'stub' for the offline stand-in.")
@click.option("--ed-model", default=None, help="ED checkpoint id, or 'stub'.")
@click.option("--device", default=None, help="Device selector, e.g. cpu or cuda:0.")
@click.option("--max-context-chars", type=int, default=None)
@click.option("--k-cap", type=int, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8750, show_default=True)
def main(config_path, qa_model, ed_model, device, max_context_chars, k_cap, host, port) -> None:
    """Serve extractive QA and generative entity disambiguation over the /v1 wire protocol."""
    config = load_config(
        config_path,
        qa_model=qa_model,
        ed_model=ed_model,
        device=device,
        max_context_chars=max_context_chars,
        k_cap=k_cap,
    )
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
