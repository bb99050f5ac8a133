#!/usr/bin/env python3
"""Generate a synthetic cross-era corpus on disk.

Writes the archive store, the query store, the ground-truth relevance
file, and a manifest, in the formats every CLI command and the retrieval
service consume.  Used by the benchmark scripts and the frontend's
end-to-end test fixture.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from eralign.corpus import Era, Manifest, ManifestEntry, save_features, save_manifest
from eralign.synth import retrieval_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--classes", type=int, default=12)
    parser.add_argument("--distractors", type=int, default=10_000)
    parser.add_argument("--relevant-per-class", type=int, default=25)
    parser.add_argument("--queries-per-class", type=int, default=20)
    parser.add_argument("--private-dim", type=int, default=3)
    parser.add_argument("--private-scale", type=float, default=2.4)
    args = parser.parse_args()

    corpus = retrieval_corpus(
        seed=args.seed, n_classes=args.classes, n_distractors=args.distractors,
        relevant_per_class=args.relevant_per_class,
        queries_per_class=args.queries_per_class,
        private_dim=args.private_dim, private_scale=args.private_scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_features(out / "archive.efs", corpus.archive)
    save_features(out / "queries.efs", corpus.queries)
    (out / "relevance.json").write_text(json.dumps({
        "relevance": {q: sorted(v) for q, v in corpus.relevance.items()},
        "classes": corpus.classes,
    }, sort_keys=True))

    entries = []
    for i, archive_id in enumerate(corpus.archive.ids):
        distractor = bool(corpus.archive.flags[i])
        entries.append(ManifestEntry(
            id=archive_id, era=Era.NEW, uri="",
            label=None if distractor else f"loc{archive_id[1:3]}",
            distractor=distractor))
    for qid in corpus.queries.ids:
        entries.append(ManifestEntry(id=qid, era=Era.OLD, uri="",
                                     label=corpus.classes[qid]))
    save_manifest(out / "manifest.jsonl", Manifest(entries=tuple(entries)))
    print(f"corpus: {corpus.archive.n} archive vectors "
          f"({args.distractors} distractors), {corpus.queries.n} queries -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
