"""Command-line interface.

State persists between invocations in a state directory (default
./apiward-state), so the usual flow is:

    apiward learn traffic.jsonl
    apiward baseline --emit-openapi api.json
    apiward classify suspect.jsonl
    apiward serve

`bench` generates a labeled corpus, runs the full pipeline and prints
metric tables; with --compare-kernels it instead times the compiled
extension against the pure-Python fallback.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click

from .config import EngineConfig
from .engine import Engine, InsufficientData, PhaseError


def _load_config(path: str | None) -> EngineConfig:
    if path:
        return EngineConfig.load(path)
    return EngineConfig()


def _load_engine(state_dir: str, config_path: str | None, fresh_ok: bool) -> Engine:
    if os.path.exists(os.path.join(state_dir, "state.json")):
        engine = Engine.load_state(state_dir)
        if config_path:
            engine.config = EngineConfig.load(config_path)
        return engine
    if not fresh_ok:
        raise click.ClickException(
            f"no engine state under {state_dir!r}; run `apiward learn` first"
        )
    return Engine(_load_config(config_path))


@click.group()
@click.option(
    "--state",
    "state_dir",
    default="apiward-state",
    show_default=True,
    help="directory holding engine state between invocations",
)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="engine config JSON")
@click.pass_context
def main(ctx: click.Context, state_dir: str, config_path: str | None) -> None:
    """Unsupervised API structure learning and anomaly detection."""
    ctx.ensure_object(dict)
    ctx.obj["state_dir"] = state_dir
    ctx.obj["config_path"] = config_path


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csic_csv", "atrdf_json"]))
@click.option("--dump-tree", "dump_tree", type=click.Path(), default=None,
              help="write the working tree snapshot JSON here")
@click.pass_context
def learn(ctx, input_path: str, fmt: str, dump_tree: str | None) -> None:
    """Ingest benign traffic from INPUT_PATH into the working tree.

    Only the dataset's benign (train) records are learned; attack-labeled
    records are never folded into the schema.
    """
    from .eval_harness import load_dataset

    engine = _load_engine(ctx.obj["state_dir"], ctx.obj["config_path"], fresh_ok=True)
    corpus = load_dataset(input_path, fmt)
    for rec in corpus.train:
        engine.ingest(rec)
    skipped = len(corpus.test)
    engine.save_state(ctx.obj["state_dir"])
    if dump_tree:
        with open(dump_tree, "w", encoding="utf-8") as fh:
            json.dump(engine.tree_snapshot(), fh, indent=2, sort_keys=True)
    click.echo(
        f"learned {len(corpus.train)} requests"
        + (f" (skipped {skipped} non-training records)" if skipped else "")
        + f"; tree holds {engine.tree.total_requests}"
    )


@main.command()
@click.option("--emit-schema", type=click.Path(), default=None,
              help="write the reduced schema JSON here")
@click.option("--emit-openapi", type=click.Path(), default=None,
              help="write the generated OpenAPI document here")
@click.option("--ae-model", type=click.Path(), default=None,
              help="also save the trained content model to this path")
@click.pass_context
def baseline(ctx, emit_schema: str | None, emit_openapi: str | None, ae_model: str | None) -> None:
    """Freeze learned traffic into a schema + content model; enter detection."""
    from . import openapi_gen

    engine = _load_engine(ctx.obj["state_dir"], ctx.obj["config_path"], fresh_ok=False)
    t0 = time.perf_counter()
    try:
        schema = engine.baseline()
    except InsufficientData as exc:
        raise click.ClickException(str(exc))
    engine.save_state(ctx.obj["state_dir"])
    if emit_schema:
        with open(emit_schema, "w", encoding="utf-8") as fh:
            json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
    if emit_openapi:
        with open(emit_openapi, "w", encoding="utf-8") as fh:
            json.dump(openapi_gen.generate_spec(schema), fh, indent=2, sort_keys=True)
    if ae_model:
        engine._snapshot.model.save(ae_model)
    click.echo(
        f"baseline ready in {time.perf_counter() - t0:.1f}s: schema v{schema.version}, "
        f"phase {engine.phase.value}"
    )


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csic_csv", "atrdf_json"]))
@click.option("--output", type=click.Path(), default=None,
              help="verdict JSONL destination (default: stdout)")
@click.pass_context
def classify(ctx, input_path: str, fmt: str, output: str | None) -> None:
    """Classify every record in INPUT_PATH; one verdict JSON per line."""
    from .eval_harness import load_dataset

    engine = _load_engine(ctx.obj["state_dir"], ctx.obj["config_path"], fresh_ok=False)
    try:
        engine.set_phase("detection")
    except PhaseError as exc:
        raise click.ClickException(str(exc))
    corpus = load_dataset(input_path, fmt)
    records = corpus.train + corpus.test
    sink = open(output, "w", encoding="utf-8") if output else sys.stdout
    anomalous = 0
    try:
        for rec in records:
            verdict = engine.classify(rec)
            anomalous += 1 if verdict.is_anomalous else 0
            sink.write(json.dumps(verdict.to_dict()) + "\n")
    finally:
        if output:
            sink.close()
    lat = engine.latency_summary()
    click.echo(
        f"classified {len(records)}: {anomalous} anomalous; "
        f"mean latency {lat.get('mean', 0.0) * 1e3:.3f} ms",
        err=True,
    )


@main.command()
@click.option("--host", default=None, help="bind address (env APIWARD_HOST)")
@click.option("--port", default=None, type=int, help="bind port (env APIWARD_PORT)")
@click.pass_context
def serve(ctx, host: str | None, port: int | None) -> None:
    """Run the HTTP gateway (loads existing state when present)."""
    from .gateway import BindError, ConfigError, serve as run_gateway

    engine = _load_engine(ctx.obj["state_dir"], ctx.obj["config_path"], fresh_ok=True)
    try:
        run_gateway(engine=engine, host=host, port=port)
    except (BindError, ConfigError) as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--benign", default=10000, show_default=True, help="benign training requests")
@click.option("--per-tag", default=200, show_default=True, help="attacks per tag per placement")
@click.option("--seed", default=7, show_default=True)
@click.option("--placement", default="both", show_default=True,
              type=click.Choice(["both", "url", "body_header"]))
@click.option("--json", "json_path", type=click.Path(), default=None,
              help="also write the full report JSON here")
@click.option("--compare-kernels", is_flag=True,
              help="microbenchmark compiled vs pure-Python kernels instead")
@click.pass_context
def bench(ctx, benign: int, per_tag: int, seed: int, placement: str,
          json_path: str | None, compare_kernels: bool) -> None:
    """Generate a labeled corpus, run the pipeline, print metric tables."""
    if compare_kernels:
        click.echo(kernel_comparison())
        return
    from .eval_harness import (
        Placement,
        default_attack_specs,
        default_templates,
        generate_corpus,
        run_benchmark,
    )

    specs = []
    if placement in ("both", "url"):
        specs += default_attack_specs(Placement.URL_EMBEDDED, per_tag=per_tag)
    if placement in ("both", "body_header"):
        specs += default_attack_specs(Placement.BODY_HEADER_EMBEDDED, per_tag=per_tag)
    corpus = generate_corpus(default_templates(), benign, specs, rng_seed=seed)
    report = run_benchmark(corpus, _load_config(ctx.obj["config_path"]))
    click.echo(report.format_tables())
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(include_records=True), fh, indent=2, sort_keys=True)
        click.echo(f"report JSON written to {json_path}")


@main.command()
@click.pass_context
def reset(ctx) -> None:
    """Clear all learned state (configuration survives)."""
    state_dir = ctx.obj["state_dir"]
    if not os.path.exists(os.path.join(state_dir, "state.json")):
        click.echo("nothing to reset")
        return
    engine = Engine.load_state(state_dir)
    engine.reset()
    engine.save_state(state_dir)
    click.echo("state cleared; phase training")


@main.command()
@click.argument("old_schema", type=click.Path(exists=True))
@click.argument("new_schema", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="emit the diff as JSON")
def diff(old_schema: str, new_schema: str, as_json: bool) -> None:
    """Compare two schema JSON files written by `baseline --emit-schema`."""
    from .openapi_gen import diff_specs, format_diff
    from .reducer import ReducedSchema

    with open(old_schema, encoding="utf-8") as fh:
        old = ReducedSchema.from_dict(json.load(fh))
    with open(new_schema, encoding="utf-8") as fh:
        new = ReducedSchema.from_dict(json.load(fh))
    delta = diff_specs(old, new)
    if as_json:
        click.echo(json.dumps(delta.to_dict(), indent=2, sort_keys=True))
    else:
        click.echo(format_diff(delta))


def kernel_comparison(rounds: int = 2000) -> str:
    """Time hash_tokens and ae_score on every available kernel."""
    import numpy as np

    from . import body_autoencoder as ae
    from ._kernels import FNV_OFFSET, available_impls

    rng = np.random.default_rng(3)
    samples = [
        (" ".join("tok%d=%d" % (i, rng.integers(1000)) for i in range(12))).encode()
        for _ in range(64)
    ]
    model = ae.AEModel.initialize(seed=5)
    layers = model._as_kernel_layers()
    x = rng.standard_normal(ae.FEATURE_DIM)

    lines = ["kernel       hash_tokens      ae_score", "-" * 44]
    timings: dict[str, tuple[float, float]] = {}
    for name, impl in sorted(available_impls().items()):
        t0 = time.perf_counter()
        for _ in range(rounds):
            impl.hash_tokens(samples[_ % len(samples)], FNV_OFFSET)
        t_hash = (time.perf_counter() - t0) / rounds
        t0 = time.perf_counter()
        for _ in range(rounds):
            impl.ae_score(x, layers, 1e-8)
        t_score = (time.perf_counter() - t0) / rounds
        timings[name] = (t_hash, t_score)
        lines.append(f"{name:<12} {t_hash * 1e6:>9.2f} us   {t_score * 1e6:>9.2f} us")
    if {"compiled", "python"} <= timings.keys():
        h = timings["python"][0] / timings["compiled"][0]
        s = timings["python"][1] / timings["compiled"][1]
        lines.append(f"speedup      {h:>9.1f} x    {s:>9.1f} x")
    return "\n".join(lines)


if __name__ == "__main__":
    main()
