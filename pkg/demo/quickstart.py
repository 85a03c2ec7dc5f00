"""End-to-end walkthrough on a small synthetic KB, using the in-process mock backends.

Builds a snapshot and corpus under a temp directory, serves the deterministic
mock backends over HTTP, then drives the CLI: build -> split -> run ->
calibrate -> run (eval split) -> eval -> annotate.

    python demo/quickstart.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from tailkbc import load_snapshot_file, mock_ed_backend, mock_qa_backend
from tailkbc.backend import serve_backend_in_thread
from tailkbc.cli import kbc_main, malt_main

SUBJECTS = [
    # (id, label, statement_count, pid, [(object id, object surface)])
    ("Q1", "Harbor Lights", 4, "P175", [("Q20", "Nadia Ferro")]),
    ("Q2", "Paper Lanterns", 9, "P175", [("Q21", "The Kestrel Five")]),
    ("Q3", "Ada Voskuijl", 3, "P19", [("Q22", "Tarnmoor")]),
    ("Q4", "Milo Okafor", 17, "P19", [("Q23", "Sable Point")]),
    ("Q5", "Rhea Castellan", 6, "P551", [("Q22", "Tarnmoor"), ("Q24", "Windmere Flats")]),
    ("Q6", "Jonas Petterle", 12, "P551", [("Q25", "Old Quarry Row")]),
]

OBJECTS = [
    ("Q20", "Nadia Ferro", []),
    ("Q21", "The Kestrel Five", ["Kestrel Five"]),
    ("Q22", "Tarnmoor", []),
    ("Q23", "Sable Point", []),
    ("Q24", "Windmere Flats", []),
    ("Q25", "Old Quarry Row", []),
    ("Q30", "Ferric Bloom", []),  # distractor: mentioned but never a KB fact
]

SENTENCES = {
    "P175": "The song {s} is often performed by {o} at small venues.",
    "P19": "{s} was born in {o} decades ago.",
    "P551": "{s} lived in {o} for a long stretch.",
}


def build_inputs(root: Path) -> tuple[Path, Path, dict[str, float], set[tuple[str, str, str]]]:
    snapshot_path = root / "snapshot.jsonl"
    corpus_path = root / "corpus.jsonl"
    gazetteer: dict[str, float] = {}
    truth: set[tuple[str, str, str]] = set()

    with snapshot_path.open("w", encoding="utf-8") as snap, corpus_path.open("w", encoding="utf-8") as corp:
        for entity_id, label, aliases in OBJECTS:
            snap.write(
                json.dumps(
                    {"id": entity_id, "label": label, "aliases": aliases, "types": [],
                     "statement_count": 3, "facts": []}
                )
                + "\n"
            )
        for subject_id, label, count, pid, gold in SUBJECTS:
            facts = [{"pid": pid, "object": oid} for oid, _ in gold]
            snap.write(
                json.dumps(
                    {"id": subject_id, "label": label, "aliases": [], "types": [],
                     "statement_count": count, "facts": facts}
                )
                + "\n"
            )
            sentences = [f"{label} keeps a short entry in the registry."]
            for oid, surface in gold:
                sentences.append(SENTENCES[pid].format(s=label, o=surface))
                gazetteer[surface] = 1.0
                truth.add((subject_id, pid, oid))
            if subject_id in ("Q2", "Q5"):
                sentences.append(f"Some reviews likened {label} to Ferric Bloom in spirit.")
                gazetteer["Ferric Bloom"] = 1.0
            corp.write(json.dumps({"id": subject_id, "text": " ".join(sentences)}) + "\n")
    return snapshot_path, corpus_path, gazetteer, truth


def run(cmd_main, args: list[str]) -> None:
    print(f"\n$ {'kbc' if cmd_main is kbc_main else 'malt'} {' '.join(args)}")
    code = cmd_main(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="tailkbc-demo-"))
    print(f"working directory: {root}")
    snapshot_path, corpus_path, gazetteer, truth = build_inputs(root)

    snapshot = load_snapshot_file(snapshot_path)
    server, backend_url = serve_backend_in_thread(
        mock_qa_backend(gazetteer), mock_ed_backend(snapshot, truth)
    )
    print(f"mock backend serving at {backend_url}")

    try:
        build = root / "build"
        run(malt_main, ["build", "--snapshot", str(snapshot_path), "--sample", "all",
                        "--seed", "7", "--out", str(build)])
        run(malt_main, ["split", "--dataset", str(build / 'dataset.jsonl'), "--fraction", "0.5",
                        "--seed", "7", "--out", str(build)])

        run_val = root / "run-validation"
        run(kbc_main, ["run", "--dataset", str(build / "validation.jsonl"),
                       "--snapshot", str(snapshot_path), "--corpus", str(corpus_path),
                       "--backend", backend_url, "--k", "20", "--out", str(run_val)])

        analysis = root / "analysis"
        run(kbc_main, ["calibrate", "--facts", str(run_val / "facts.jsonl"),
                       "--validation", str(build / "validation.jsonl"), "--out", str(analysis)])

        run_eval = root / "run-eval"
        run(kbc_main, ["run", "--dataset", str(build / "eval.jsonl"),
                       "--snapshot", str(snapshot_path), "--corpus", str(corpus_path),
                       "--backend", backend_url, "--out", str(run_eval)])
        run(kbc_main, ["eval", "--facts", str(run_eval / "facts.jsonl"),
                       "--gold", str(build / "eval.jsonl"), "--out", str(analysis)])
        run(kbc_main, ["annotate", "--facts", str(run_eval / "facts.jsonl"),
                       "--gold", str(build / "dataset.jsonl"), "--n", "25", "--seed", "3",
                       "--out", str(analysis)])

        print("\nannotation sheet (novel facts, for a human verdict):")
        print((analysis / "annotation.csv").read_text(encoding="utf-8"))
        print(f"all outputs under {root}")
    finally:
        server.shutdown()


if __name__ == "__main__":
    main()
