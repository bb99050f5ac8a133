"""Command-line interface.

Every command writes a resolved config (config.json) into its output
directory; re-running with ``--config`` on that file reproduces the
outputs bit-exactly.  Exit codes: 0 ok, 1 data/runtime error, 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import synth
from .adapt import GfkModel, SaModel, learn_gfk, learn_sa
from .config import (
    DEFAULT_GMM_COMPONENTS,
    DEFAULT_MLE_K_MAX,
    DEFAULT_MLE_K_MIN,
    DEFAULT_REPETITIONS,
    DEFAULT_VOCAB_SIZE,
    JobConfig,
    ServeConfig,
)
from .corpus import (
    FeatureStore,
    load_features,
    load_manifest,
    load_model,
    sample_descriptors,
    save_features,
    save_model,
)
from .data import Domain, FeatureMatrix
from .encode import (
    CodebookMode,
    EncodingScheme,
    bow_counts,
    compute_idf,
    encode_bow,
    encode_fv,
    train_codebook,
    train_gmm,
)
from .errors import EngineError, InvalidInputError
from .evaluate import (
    AdaptPlan,
    Metric,
    evaluate_accuracy,
    mean_average_precision,
    nn_classify,
    run_protocol,
)
from .retrieve import build_index, query_topk, simulate_session
from .subspace import DimMethod, estimate_dim_eig, estimate_dim_fractal, estimate_dim_mle, fit_pca

COMMANDS = ("encode", "train-codebook", "train-gmm", "fit-subspace",
            "estimate-dim", "adapt", "classify", "eval", "index",
            "retrieve", "simulate-session", "serve", "report")


def _out_dir(cfg: JobConfig) -> Path:
    out = Path(cfg.out_dir)
    cfg.write(out)
    return out


def _labeled_matrix(features_path: str, manifest_path: str | None,
                    domain: Domain) -> FeatureMatrix:
    store = load_features(features_path)
    manifest = load_manifest(manifest_path) if manifest_path else None
    return store.to_matrix(domain=domain, manifest=manifest)


def _load_descriptor_stores(paths: list[str]) -> list[FeatureStore]:
    files: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            files.extend(sorted(path.glob("*.efs")))
        else:
            files.append(path)
    if not files:
        raise InvalidInputError("no descriptor stores found")
    return [load_features(f) for f in files]


def _descriptor_sample(cfg: JobConfig) -> FeatureMatrix:
    stores = _load_descriptor_stores(cfg.params["descriptors"])
    total = sum(s.n for s in stores)
    count = min(int(cfg.params.get("sample", total)), total)
    return sample_descriptors(stores, count, cfg.seed)


def cmd_train_codebook(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    data = _descriptor_sample(cfg)
    cb = train_codebook(data, int(cfg.params.get("k", DEFAULT_VOCAB_SIZE)),
                        CodebookMode(cfg.params.get("mode", "exact")), seed=cfg.seed)
    save_model(out / "codebook.emf", cb)
    print(f"codebook: k={cb.k} dim={cb.dim} -> {out / 'codebook.emf'}")
    return 0


def cmd_train_gmm(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    data = _descriptor_sample(cfg)
    gmm = train_gmm(data, int(cfg.params.get("components", DEFAULT_GMM_COMPONENTS)),
                    seed=cfg.seed)
    save_model(out / "gmm.emf", gmm)
    print(f"gmm: K={gmm.n_components} dim={gmm.dim} -> {out / 'gmm.emf'}")
    return 0


def cmd_encode(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    scheme = EncodingScheme(cfg.params["scheme"])
    per_image = []
    for path in sorted(Path(cfg.params["descriptors_dir"]).glob("*.efs")):
        per_image.append((path.stem, load_features(path)))
    if not per_image:
        raise InvalidInputError("descriptor directory holds no .efs files")

    if scheme is EncodingScheme.FISHER_VECTOR:
        gmm = load_model(cfg.params["gmm"])
        rows = [encode_fv(store.to_matrix(), gmm).values for _, store in per_image]
    else:
        cb = load_model(cfg.params["codebook"])
        idf = None
        if scheme is EncodingScheme.BOW_TFIDF:
            counts = [bow_counts(store.to_matrix(), cb) for _, store in per_image]
            idf = compute_idf(counts)
            np.save(out / "idf.npy", idf)
        rows = [encode_bow(store.to_matrix(), cb, idf).values
                for _, store in per_image]
    matrix = FeatureMatrix(rows=np.vstack(rows),
                           ids=tuple(name for name, _ in per_image),
                           domain=Domain.SOURCE)
    save_features(out / "encoded.efs", matrix)
    print(f"encoded {matrix.n} images at dimension {matrix.dim} -> {out / 'encoded.efs'}")
    return 0


def cmd_fit_subspace(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    matrix = _labeled_matrix(cfg.params["features"], None, Domain.SOURCE)
    d = int(cfg.params["dim"])
    space = fit_pca(matrix, d)
    save_model(out / "subspace.emf", space)
    print(f"subspace: D={space.ambient_dim} d={space.dim} -> {out / 'subspace.emf'}")
    return 0


def cmd_estimate_dim(cfg: JobConfig) -> int:
    matrix = _labeled_matrix(cfg.params["features"], None, Domain.SOURCE)
    method = DimMethod(cfg.params["method"])
    if method is DimMethod.EIG:
        cap = min(matrix.n - 1, matrix.dim)
        space = fit_pca(matrix, cap)
        est = estimate_dim_eig(space.eigenvalues, float(cfg.params.get("energy", 0.99)))
    elif method is DimMethod.MLE:
        est = estimate_dim_mle(matrix,
                               int(cfg.params.get("k_min", DEFAULT_MLE_K_MIN)),
                               int(cfg.params.get("k_max", DEFAULT_MLE_K_MAX)))
    else:
        est = estimate_dim_fractal(matrix, method, seed=cfg.seed)
    print(f"{method.value}: {est.value:.4f} (rounded {est.rounded})")
    if cfg.params.get("write_output"):
        out = _out_dir(cfg)
        (out / "estimate.json").write_text(json.dumps(
            {"method": method.value, "value": est.value, "rounded": est.rounded},
            sort_keys=True) + "\n")
    return 0


def cmd_adapt(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    source = load_model(cfg.params["source_subspace"])
    target = load_model(cfg.params["target_subspace"])
    method = cfg.params.get("method", "sa")
    if method == "gfk":
        model = learn_gfk(source, target, int(cfg.params["dim"]))
    else:
        model = learn_sa(source, target)
    save_model(out / "alignment.emf", model)
    print(f"{method} model -> {out / 'alignment.emf'}")
    return 0


def cmd_classify(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    train = _labeled_matrix(cfg.params["train_features"],
                            cfg.params["train_manifest"], Domain.SOURCE)
    test = _labeled_matrix(cfg.params["test_features"],
                           cfg.params.get("test_manifest"), Domain.TARGET)
    metric = Metric.from_key(cfg.params.get("metric", "euclidean"))
    model = load_model(cfg.params["model"]) if cfg.params.get("model") else None
    preds = nn_classify(train, test, metric, model)
    with (out / "predictions.jsonl").open("w") as fh:
        for p in preds:
            fh.write(json.dumps({
                "id": p.sample_id, "label": p.predicted_label,
                "nearest": p.nearest_source_id, "score": p.score,
            }, sort_keys=True) + "\n")
    print(f"classified {len(preds)} samples -> {out / 'predictions.jsonl'}")
    if test.labels is not None:
        acc = evaluate_accuracy(preds, dict(zip(test.ids, test.labels)))
        print(f"accuracy: {acc:.2f}%")
    return 0


def cmd_eval(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    tags = cfg.params.get("tags", {})
    if cfg.params.get("predictions"):
        manifest = load_manifest(cfg.params["manifest"])
        truth = {e.id: e.label for e in manifest.entries if e.label is not None}
        preds = []
        from .evaluate import Prediction
        with open(cfg.params["predictions"]) as fh:
            for line in fh:
                rec = json.loads(line)
                preds.append(Prediction(rec["id"], rec["label"],
                                        rec["nearest"], rec["score"]))
        acc = evaluate_accuracy(preds, truth)
        result = {"kind": "accuracy", "tags": tags, "accuracy": acc}
        print(f"accuracy: {acc:.2f}%")
    else:
        source = _labeled_matrix(cfg.params["source_features"],
                                 cfg.params["source_manifest"], Domain.SOURCE)
        target = _labeled_matrix(cfg.params["target_features"],
                                 cfg.params["target_manifest"], Domain.TARGET)
        spc = cfg.params.get("samples_per_class", "all")
        spc = spc if spc == "all" else int(spc)
        reps = int(cfg.params.get("repetitions", DEFAULT_REPETITIONS))
        adapt = None
        if cfg.params.get("adapt_method"):
            adapt = AdaptPlan(method=cfg.params["adapt_method"],
                              gfk_use_sdm=bool(cfg.params.get("gfk_use_sdm", False)))
        res = run_protocol(source, target, spc, reps, cfg.seed,
                           Metric.from_key(cfg.params.get("metric", "euclidean")),
                           adapt)
        result = {"kind": "protocol", "tags": tags,
                  "samples_per_class": spc, "repetitions": res.repetitions,
                  "mean_accuracy": res.mean_accuracy, "std_dev": res.std_dev,
                  "per_class_accuracy": res.per_class_accuracy}
        print(f"protocol: mean={res.mean_accuracy:.2f}% std={res.std_dev:.2f} "
              f"reps={res.repetitions}")
    (out / "result.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_index(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    store = load_features(cfg.params["store"])
    index = build_index(store)
    normalized = FeatureStore(ids=index.ids, values=index.vectors, flags=index.flags)
    save_features(out / "index.efs", normalized)
    (out / "index.json").write_text(json.dumps(
        {"mode": index.mode.value, "count": index.n, "dim": index.ambient_dim},
        sort_keys=True) + "\n")
    print(f"indexed {index.n} vectors (dim {index.ambient_dim}) -> {out / 'index.efs'}")
    return 0


def cmd_retrieve(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    store = load_features(cfg.params["store"])
    index = build_index(store)
    if cfg.params.get("model"):
        from .retrieve import Session, adapted_index
        model = load_model(cfg.params["model"])
        if not isinstance(model, SaModel):
            raise InvalidInputError("retrieve --model expects an alignment model")
        whitening = np.maximum(model.target.eigenvalues,
                               1e-8 * float(model.target.eigenvalues.max()))
        session = Session(archive=store, model=model,
                          whitening_eigenvalues=whitening)
        index = adapted_index(index, session)
    queries = load_features(cfg.params["queries"])
    k = int(cfg.params.get("k", 10))
    rankings = {}
    with (out / "rankings.jsonl").open("w") as fh:
        for qid in queries.ids:
            ranked = query_topk(index, queries.values[queries.row_index(qid)].astype(np.float64), k)
            rankings[qid] = [r for r, _ in ranked]
            fh.write(json.dumps({"query_id": qid,
                                 "ranked": [r for r, _ in ranked],
                                 "scores": [s for _, s in ranked]}) + "\n")
    print(f"retrieved top-{k} for {len(rankings)} queries -> {out / 'rankings.jsonl'}")
    if cfg.params.get("relevance"):
        rel_data = json.loads(Path(cfg.params["relevance"]).read_text())
        relevance = {q: frozenset(v) for q, v in rel_data["relevance"].items()}
        classes = rel_data.get("classes")
        score = mean_average_precision(rankings, relevance, classes)
        (out / "result.json").write_text(json.dumps(
            {"kind": "retrieval", "tags": cfg.params.get("tags", {}),
             "map": score, "k": k}, sort_keys=True) + "\n")
        print(f"mAP@{k}: {score:.4f}")
    return 0


def cmd_simulate_session(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    if cfg.params.get("archive"):
        archive = load_features(cfg.params["archive"])
        queries_store = load_features(cfg.params["queries"])
        rel_data = json.loads(Path(cfg.params["relevance"]).read_text())
        relevance = {q: frozenset(v) for q, v in rel_data["relevance"].items()}
        classes = rel_data["classes"]
        corpus = synth.RetrievalCorpus(
            archive=archive,
            queries=queries_store.to_matrix(domain=Domain.TARGET),
            relevance=relevance, classes=classes)
    else:
        corpus = synth.retrieval_corpus(seed=int(cfg.params.get("corpus_seed", 0)))
    schedule = None
    spc = cfg.params.get("schedule_per_class")
    if spc:
        schedule = [q for q in corpus.queries.ids
                    if int(q.rsplit("_", 1)[1]) < int(spc)]
    report = simulate_session(
        corpus, query_schedule=schedule, seed=cfg.seed,
        repetitions=int(cfg.params.get("repetitions", 10)),
        k=int(cfg.params.get("k", 50)),
        curve_every=int(cfg.params.get("curve_every", 6)),
        relearn_every=cfg.params.get("relearn_every"),
        oracle_error_rate=float(cfg.params.get("oracle_error_rate", 0.0)))
    (out / "report.json").write_text(json.dumps(
        {"kind": "session", "tags": cfg.params.get("tags", {}),
         **report.to_dict()}, sort_keys=True, indent=2) + "\n")
    with (out / "curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repetition", "queries", "map"])
        for rep_i, curve in enumerate(report.curves):
            for step, value in curve:
                writer.writerow([rep_i, step, f"{value:.6f}"])
    print(f"before={report.before_map:.4f} "
          f"after={report.after_mean:.4f}+/-{report.after_std:.4f} "
          f"baseline={report.baseline_mean:.4f}+/-{report.baseline_std:.4f}")
    return 0


def cmd_serve(cfg: JobConfig) -> int:
    import uvicorn

    from .service import create_app

    serve_cfg = ServeConfig(
        store_path=cfg.params["store"],
        sessions_dir=cfg.params.get("sessions_dir", str(Path(cfg.out_dir) / "sessions")),
        manifest_path=cfg.params.get("manifest"),
        query_store_path=cfg.params.get("query_store"),
        relevance_path=cfg.params.get("relevance"),
        gmm_path=cfg.params.get("gmm"),
        host=cfg.params.get("host", "127.0.0.1"),
        port=int(cfg.params.get("port", 8321)),
        relearn=bool(cfg.params.get("relearn", False)),
    )
    _out_dir(cfg)
    app = create_app(serve_cfg)
    uvicorn.run(app, host=serve_cfg.host, port=serve_cfg.port, log_level="warning")
    return 0


_TABLE_COLUMNS = ["detector", "descriptor", "representation", "classifier",
                  "acc_one_mean", "acc_one_std", "acc_all"]


def cmd_report(cfg: JobConfig) -> int:
    out = _out_dir(cfg)
    results_dir = Path(cfg.params["results"])
    rows: dict[tuple, dict] = {}
    retrieval_rows = []
    curves = []
    for path in sorted(results_dir.rglob("*.json")):
        if path.name == "config.json":
            continue
        data = json.loads(path.read_text())
        kind = data.get("kind")
        tags = data.get("tags", {})
        if kind == "protocol":
            key = tuple(tags.get(c, "-") for c in _TABLE_COLUMNS[:4])
            row = rows.setdefault(key, {})
            if data.get("samples_per_class") == "all":
                row["acc_all"] = data["mean_accuracy"]
            else:
                row["acc_one_mean"] = data["mean_accuracy"]
                row["acc_one_std"] = data["std_dev"]
        elif kind == "retrieval":
            retrieval_rows.append({"method": tags.get("method", "-"),
                                   "map": data["map"]})
        elif kind == "session":
            curves.append((tags.get("method", "session"), data["curves"]))

    with (out / "classification_table.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TABLE_COLUMNS)
        for key in sorted(rows):
            row = rows[key]
            writer.writerow(list(key) + [
                _fmt(row.get("acc_one_mean")), _fmt(row.get("acc_one_std")),
                _fmt(row.get("acc_all"))])
    with (out / "retrieval_table.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "map"])
        for row in sorted(retrieval_rows, key=lambda r: r["method"]):
            writer.writerow([row["method"], f"{row['map']:.4f}"])
    with (out / "session_curves.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "repetition", "queries", "map"])
        for method, reps in curves:
            for rep_i, curve in enumerate(reps):
                for step, value in curve:
                    writer.writerow([method, rep_i, step, f"{value:.6f}"])
    print(f"report tables -> {out}")
    return 0


def _fmt(value) -> str:
    return "" if value is None else f"{value:.2f}"


_HANDLERS = {
    "encode": cmd_encode,
    "train-codebook": cmd_train_codebook,
    "train-gmm": cmd_train_gmm,
    "fit-subspace": cmd_fit_subspace,
    "estimate-dim": cmd_estimate_dim,
    "adapt": cmd_adapt,
    "classify": cmd_classify,
    "eval": cmd_eval,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "simulate-session": cmd_simulate_session,
    "serve": cmd_serve,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eralign")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **spec):
        p = sub.add_parser(name)
        p.add_argument("--config", help="re-run from a resolved config file")
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=0)
        for flag, kwargs in spec.items():
            p.add_argument(flag, **kwargs)
        return p

    add("encode", **{"--descriptors-dir": {}, "--scheme": {
        "choices": [s.value for s in EncodingScheme]},
        "--codebook": {}, "--gmm": {}})
    add("train-codebook", **{"--descriptors": {"nargs": "+"}, "--k": {"type": int},
                             "--mode": {"choices": ["exact", "approximate"],
                                        "default": "exact"},
                             "--sample": {"type": int}})
    add("train-gmm", **{"--descriptors": {"nargs": "+"},
                        "--components": {"type": int}, "--sample": {"type": int}})
    add("fit-subspace", **{"--features": {}, "--dim": {"type": int}})
    add("estimate-dim", **{"--features": {}, "--method": {
        "choices": [m.value for m in DimMethod]},
        "--energy": {"type": float}, "--k-min": {"type": int},
        "--k-max": {"type": int}})
    add("adapt", **{"--source-subspace": {}, "--target-subspace": {},
                    "--method": {"choices": ["sa", "gfk"], "default": "sa"},
                    "--dim": {"type": int}})
    add("classify", **{"--train-features": {}, "--train-manifest": {},
                       "--test-features": {}, "--test-manifest": {},
                       "--metric": {"default": "euclidean"}, "--model": {}})
    add("eval", **{"--predictions": {}, "--manifest": {},
                   "--source-features": {}, "--source-manifest": {},
                   "--target-features": {}, "--target-manifest": {},
                   "--samples-per-class": {"default": "all"},
                   "--repetitions": {"type": int, "default": DEFAULT_REPETITIONS},
                   "--metric": {"default": "euclidean"},
                   "--adapt-method": {}, "--gfk-use-sdm": {"action": "store_true"},
                   "--tag": {"action": "append", "default": []}})
    add("index", **{"--store": {}})
    add("retrieve", **{"--store": {}, "--queries": {}, "--k": {"type": int, "default": 10},
                       "--model": {}, "--relevance": {},
                       "--tag": {"action": "append", "default": []}})
    add("simulate-session", **{"--archive": {}, "--queries": {}, "--relevance": {},
                               "--corpus-seed": {"type": int, "default": 0},
                               "--repetitions": {"type": int, "default": 10},
                               "--k": {"type": int, "default": 50},
                               "--schedule-per-class": {"type": int},
                               "--curve-every": {"type": int, "default": 6},
                               "--relearn-every": {"type": int},
                               "--oracle-error-rate": {"type": float, "default": 0.0},
                               "--tag": {"action": "append", "default": []}})
    add("serve", **{"--store": {}, "--sessions-dir": {}, "--manifest": {},
                    "--query-store": {}, "--relevance": {}, "--gmm": {},
                    "--host": {"default": "127.0.0.1"},
                    "--port": {"type": int, "default": 8321},
                    "--relearn": {"action": "store_true"}})
    add("report", **{"--results": {}})
    return parser


def _tags_from(pairs: list[str]) -> dict:
    tags = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidInputError(f"tag {pair!r} must be key=value")
        key, value = pair.split("=", 1)
        tags[key] = value
    return tags


def _resolve_config(args: argparse.Namespace) -> JobConfig:
    if args.config:
        cfg = JobConfig.from_file(args.config)
        if cfg.command != args.command:
            raise InvalidInputError(
                f"config is for {cfg.command!r}, not {args.command!r}")
        if args.out:
            cfg = JobConfig(command=cfg.command, seed=cfg.seed,
                            out_dir=args.out, params=cfg.params)
        return cfg
    params = {}
    skip = {"command", "config", "out", "seed", "func"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key == "tag":
            params["tags"] = _tags_from(value)
        elif value != [] or key != "tag":
            params[key] = value
    out = args.out or f"runs/{args.command}"
    if args.command == "estimate-dim":
        params["write_output"] = args.out is not None
    return JobConfig(command=args.command, seed=args.seed, out_dir=out, params=params)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = _resolve_config(args)
        return _HANDLERS[cfg.command](cfg)
    except EngineError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
