"""Command-line entry points: `malt` for dataset construction, `kbc` for the inference workflow.

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error, 4 failure-tolerance breach.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from . import evaluation as ev
from . import malt as maltmod
from . import pipeline as pl
from .backend import BackendError, HttpBackend
from .kb import load_snapshot_file
from .corpus import load_corpus_file
from .model import DataError
from .prompts import DEFAULT_RELATIONS, load_relations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3
EXIT_TOLERANCE = 4

_in_path = click.Path(exists=True, dir_okay=False, path_type=Path)
_out_dir = click.Path(file_okay=False, path_type=Path)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_relation_specs(path: Path | None):
    return load_relations(path) if path is not None else DEFAULT_RELATIONS


@click.group(name="malt")
def malt_cli() -> None:
    """Build and split benchmark datasets from a KB snapshot."""


@malt_cli.command("build")
@click.option("--snapshot", "snapshot_path", type=_in_path, required=True, help="Snapshot JSONL file.")
@click.option("--relations", "relations_path", type=_in_path, default=None, help="Relation registry override (JSON).")
@click.option("--sample", default="all", show_default=True, help="Subjects per relation: a positive integer or 'all'.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=_out_dir, required=True, help="Output directory.")
def malt_build(snapshot_path: Path, relations_path: Path | None, sample: str, seed: int, out_dir: Path) -> None:
    """Sample subjects per relation and emit dataset.jsonl plus stats.json/stats.txt."""
    if sample != "all":
        try:
            sample_n: int | str = int(sample)
        except ValueError:
            raise click.UsageError("--sample must be a positive integer or 'all'")
    else:
        sample_n = "all"
    snapshot = load_snapshot_file(snapshot_path)
    relations = _load_relation_specs(relations_path)
    records = maltmod.build_dataset(snapshot, relations, per_relation_subject_sample=sample_n, seed=seed)
    stats = maltmod.dataset_stats(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = maltmod.write_dataset(records, out_dir / "dataset.jsonl")
    _write_json(out_dir / "stats.json", maltmod.stats_to_dict(stats))
    table = maltmod.format_stats_table(stats, relations)
    (out_dir / "stats.txt").write_text(table, encoding="utf-8")
    click.echo(table, nl=False)
    click.echo(f"wrote {n} records to {out_dir / 'dataset.jsonl'}")


@malt_cli.command("split")
@click.option("--dataset", "dataset_path", type=_in_path, required=True)
@click.option("--fraction", type=float, default=0.2, show_default=True, help="Validation fraction.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=_out_dir, required=True)
def malt_split(dataset_path: Path, fraction: float, seed: int, out_dir: Path) -> None:
    """Stratified hold-out split into eval.jsonl and validation.jsonl."""
    records = maltmod.read_dataset(dataset_path)
    try:
        evaluation, validation = maltmod.split_dataset(records, validation_fraction=fraction, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    n_eval = maltmod.write_dataset(evaluation, out_dir / "eval.jsonl")
    n_val = maltmod.write_dataset(validation, out_dir / "validation.jsonl")
    click.echo(f"wrote {n_eval} eval records and {n_val} validation records to {out_dir}")


@click.group(name="kbc")
def kbc_cli() -> None:
    """Run the two-stage completion pipeline and evaluate its output."""


@kbc_cli.command("run")
@click.option("--dataset", "dataset_path", type=_in_path, required=True, help="Benchmark records to complete.")
@click.option("--snapshot", "snapshot_path", type=_in_path, required=True)
@click.option("--corpus", "corpus_path", type=_in_path, required=True)
@click.option("--backend", "backend_url", envvar="KBC_BACKEND_URL", required=True,
              help="Backend base URL (or set KBC_BACKEND_URL).")
@click.option("--relations", "relations_path", type=_in_path, default=None)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--alpha", type=float, default=None, help="Optional cutoff applied to the emitted facts.")
@click.option("--max-in-flight", type=int, default=8, show_default=True)
@click.option("--failure-tolerance", type=float, default=0.1, show_default=True)
@click.option("--out", "out_dir", type=_out_dir, required=True)
def kbc_run(
    dataset_path: Path,
    snapshot_path: Path,
    corpus_path: Path,
    backend_url: str,
    relations_path: Path | None,
    k: int,
    alpha: float | None,
    max_in_flight: int,
    failure_tolerance: float,
    out_dir: Path,
) -> None:
    """Generate, corroborate, and canonicalize facts; emit facts.jsonl and a run manifest."""
    if k < 1:
        raise click.UsageError("--k must be >= 1")
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        raise click.UsageError("--alpha must be within [0, 1]")
    backend = HttpBackend(backend_url)
    health = backend.health()
    if health.get("status") != "ok":
        raise BackendError(f"backend unhealthy: {health}")
    snapshot = load_snapshot_file(snapshot_path)
    corpus = load_corpus_file(corpus_path)
    records = maltmod.read_dataset(dataset_path)
    relations = _load_relation_specs(relations_path)
    config = {
        "dataset": str(dataset_path),
        "snapshot": str(snapshot_path),
        "corpus": str(corpus_path),
        "backend": backend_url,
        "relations": str(relations_path) if relations_path else None,
        "k": k,
        "alpha": alpha,
        "max_in_flight": max_in_flight,
        "failure_tolerance": failure_tolerance,
    }
    started = time.time()
    try:
        result = pl.run_pipeline(
            records,
            snapshot,
            corpus,
            qa_backend=backend,
            ed_backend=backend,
            relations=relations,
            k=k,
            max_in_flight=max_in_flight,
            failure_tolerance=failure_tolerance,
        )
    except pl.FailureToleranceError as exc:
        _write_json(
            out_dir / "manifest.json",
            {
                "command": "kbc run",
                "config": config,
                "elapsed_seconds": time.time() - started,
                "n_items": exc.n_items,
                "n_failures": len(exc.failures),
                "failures": [{"subject": f.subject, "pid": f.pid, "error": f.error} for f in exc.failures],
                "n_facts": None,
                "aborted": True,
            },
        )
        raise
    facts = result.facts if alpha is None else pl.filter_threshold(result.facts, alpha)
    n_facts = pl.write_facts(facts, out_dir / "facts.jsonl")
    _write_json(
        out_dir / "manifest.json",
        {
            "command": "kbc run",
            "config": config,
            "elapsed_seconds": time.time() - started,
            "n_items": result.n_items,
            "n_failures": len(result.failures),
            "failures": [{"subject": f.subject, "pid": f.pid, "error": f.error} for f in result.failures],
            "n_facts": n_facts,
            "aborted": False,
        },
    )
    click.echo(f"wrote {n_facts} facts to {out_dir / 'facts.jsonl'} ({len(result.failures)} item failures)")


@kbc_cli.command("calibrate")
@click.option("--facts", "facts_path", type=_in_path, required=True, help="Scored facts over validation subjects.")
@click.option("--validation", "validation_path", type=_in_path, required=True, help="Validation gold records.")
@click.option("--out", "out_dir", type=_out_dir, required=True)
def kbc_calibrate(facts_path: Path, validation_path: Path, out_dir: Path) -> None:
    """Learn the score cutoff maximizing unweighted-aggregate F1 on the validation split."""
    facts = pl.read_facts(facts_path)
    gold = maltmod.read_dataset(validation_path)
    try:
        result = ev.calibrate_alpha(facts, gold)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    _write_json(out_dir / "calibration.json", ev.calibration_to_dict(result))
    click.echo(f"alpha={result.alpha} best_f1={result.best_f1:.4f} (curve has {len(result.curve)} points)")


@kbc_cli.command("eval")
@click.option("--facts", "facts_path", type=_in_path, required=True)
@click.option("--gold", "gold_path", type=_in_path, required=True)
@click.option("--alpha", type=float, default=None, help="Cutoff; when absent, read from the calibration artifact.")
@click.option("--calibration", "calibration_path", type=_in_path, default=None,
              help="Calibration artifact (defaults to <out>/calibration.json).")
@click.option("--out", "out_dir", type=_out_dir, required=True)
def kbc_eval(
    facts_path: Path, gold_path: Path, alpha: float | None, calibration_path: Path | None, out_dir: Path
) -> None:
    """Filter facts at the cutoff and score them against gold; emit report.json/report.txt."""
    if alpha is None:
        source = calibration_path if calibration_path is not None else out_dir / "calibration.json"
        if not Path(source).exists():
            raise click.UsageError("--alpha absent and no calibration artifact found; run kbc calibrate first")
        try:
            alpha = float(json.loads(Path(source).read_text(encoding="utf-8"))["alpha"])
        except (ValueError, KeyError) as exc:
            raise DataError(f"{source}: not a calibration artifact: {exc}") from exc
    if not 0.0 <= alpha <= 1.0:
        raise click.UsageError("--alpha must be within [0, 1]")
    facts = pl.filter_threshold(pl.read_facts(facts_path), alpha)
    gold = maltmod.read_dataset(gold_path)
    report = ev.evaluate(facts, gold, alpha=alpha)
    _write_json(out_dir / "report.json", ev.report_to_dict(report))
    table = ev.format_report_table(report)
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    click.echo(table, nl=False)


@kbc_cli.command("annotate")
@click.option("--facts", "facts_path", type=_in_path, required=True)
@click.option("--gold", "gold_path", type=_in_path, required=True)
@click.option("--n", "per_relation", type=int, default=25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=_out_dir, required=True)
def kbc_annotate(facts_path: Path, gold_path: Path, per_relation: int, seed: int, out_dir: Path) -> None:
    """Sample novel facts (absent from gold) per relation into an annotation sheet."""
    if per_relation < 1:
        raise click.UsageError("--n must be >= 1")
    facts = pl.read_facts(facts_path)
    gold = maltmod.read_dataset(gold_path)
    rows = ev.sample_for_annotation(facts, gold, per_relation=per_relation, seed=seed)
    n = ev.write_annotation_csv(rows, out_dir / "annotation.csv")
    click.echo(f"wrote {n} rows to {out_dir / 'annotation.csv'}")


@kbc_cli.command("aggregate")
@click.option("--rows", "rows_path", type=_in_path, required=True,
              help="JSON array of rows: objects with precision/recall/f1 (and weight), or [p, r, f1] arrays.")
@click.option("--mode", type=click.Choice(["unweighted", "weighted"]), default="unweighted", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
def kbc_aggregate(rows_path: Path, mode: str, out_path: Path | None) -> None:
    """Replay an aggregation over per-relation metric rows."""
    try:
        raw = json.loads(rows_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{rows_path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise DataError(f"{rows_path}: expected a non-empty JSON array")
    rows = []
    weights = []
    for entry in raw:
        if isinstance(entry, dict):
            try:
                rows.append((float(entry["precision"]), float(entry["recall"]), float(entry["f1"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{rows_path}: malformed row {entry!r}: {exc}") from exc
            weights.append(float(entry.get("weight", 1.0)))
        elif isinstance(entry, list) and len(entry) == 3:
            rows.append(tuple(float(x) for x in entry))
            weights.append(1.0)
        else:
            raise DataError(f"{rows_path}: malformed row {entry!r}")
    result = ev.aggregate(rows, mode=mode, weights=weights if mode == "weighted" else None)
    payload = {"mode": mode, "precision": result[0], "recall": result[1], "f1": result[2]}
    if out_path is not None:
        _write_json(out_path, payload)
    click.echo(f"{mode}: P={result[0]:.4f} R={result[1]:.4f} F1={result[2]:.4f}")


def _dispatch(group: click.Group, argv: list[str] | None) -> int:
    try:
        group.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return EXIT_OK if exc.exit_code == 0 else EXIT_USAGE
    except (click.UsageError, click.Abort) as exc:
        if isinstance(exc, click.UsageError):
            exc.show(file=sys.stderr)
        return EXIT_USAGE
    except pl.FailureToleranceError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_TOLERANCE
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except (DataError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA


def malt_main(argv: list[str] | None = None) -> int:
    return _dispatch(malt_cli, argv)


def kbc_main(argv: list[str] | None = None) -> int:
    return _dispatch(kbc_cli, argv)


if __name__ == "__main__":
    sys.exit(kbc_main())
