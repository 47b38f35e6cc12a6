"""Command-line entry points: train, predict, cv, report.

Every command reads a flat key=value config (see :mod:`dolda.config`),
writes its artifacts into an output directory, and leaves behind a
manifest recording the exact configuration, corpus fingerprint, and
code version that produced them.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import Config, ConfigError, parse_config
from .corpus import (
    CovariateEncoder,
    build_vocabulary,
    encode,
    load_stoplist,
    read_corpus_dir,
    read_corpus_table,
    split_folds,
    tokenize,
)
from .predict import FittedModel, load_model, predict_corpus, save_model
from .regression import PriorFamily
from .report import write_report
from .rng import derive_seed
from .sampler import RunConfig, SamplerAbort, corpus_fingerprint, run_sampler
from .serialize import SCHEMA_VERSION


def _stoplist_for(cfg: Config):
    if cfg.stoplist == "default":
        return load_stoplist()
    if cfg.stoplist in ("none", "off"):
        return None
    return load_stoplist(cfg.stoplist)


def _read_inputs(cfg: Config, need_labels: bool):
    """(ids, texts, labels, covariate frame) from whichever source the
    config names."""
    if need_labels:
        cfg.require("label_column")
    if cfg.corpus_table is not None:
        return read_corpus_table(
            cfg.corpus_table,
            text_column=cfg.text_column,
            label_column=cfg.label_column,
            covariate_columns=cfg.covariate_columns,
            doc_id_column=cfg.doc_id_column,
            delimiter=cfg.delimiter,
        )
    if cfg.corpus_dir is not None:
        cfg.require("metadata_file", "doc_id_column")
        return read_corpus_dir(
            cfg.corpus_dir,
            metadata_path=cfg.metadata_file,
            doc_id_column=cfg.doc_id_column,
            label_column=cfg.label_column,
            covariate_columns=cfg.covariate_columns,
            delimiter=cfg.delimiter,
        )
    raise ConfigError("config must set corpus_table or corpus_dir")


def _run_config(cfg: Config) -> RunConfig:
    return RunConfig(
        n_topics=cfg.n_topics,
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        phi_mean_window=cfg.phi_mean_window,
        alpha=cfg.alpha,
        beta=cfg.beta,
        prior=PriorFamily(kind=cfg.prior, c=cfg.c),
        thinning=cfg.thinning,
        seed=cfg.seed,
        workers=cfg.workers,
        checkpoint_every=cfg.checkpoint_every,
        predict_passes=cfg.predict_passes,
        predict_burn=cfg.predict_burn,
    )


def _config_snapshot(cfg: Config) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.values.items()}


def _write_manifest(output_dir: str, payload: dict) -> str:
    path = os.path.join(output_dir, "manifest.json")
    payload = {"schema_version": SCHEMA_VERSION, "code_version": __version__, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fit_on(cfg: Config, token_docs, labels, covars, output_dir, seed=None):
    """Shared fit path: vocabulary, encoding, sampling, fitted model."""
    vocab = build_vocabulary(token_docs, stoplist=None, rare_mass=cfg.rare_mass)
    corpus, encoder, kept = encode(
        token_docs, labels, covars, vocab, min_class_docs=cfg.min_class_docs
    )
    run_cfg = _run_config(cfg)
    if seed is not None:
        run_cfg.seed = seed
    trace_path = os.path.join(output_dir, "trace.tsv") if output_dir else None
    result = run_sampler(
        corpus, run_cfg, trace_path=trace_path, checkpoint_dir=output_dir
    )
    model = FittedModel(
        phi_bar=result.phi_bar,
        eta_mean=result.eta_mean,
        eta_draws=result.eta_draws,
        vocabulary=vocab,
        label_names=corpus.label_names,
        n_topics=run_cfg.n_topics,
        alpha=run_cfg.alpha,
        beta=run_cfg.beta,
        prior=run_cfg.prior,
        covariate_meta=encoder.to_meta() if encoder is not None else None,
        predict_passes=run_cfg.predict_passes,
        predict_burn=run_cfg.predict_burn,
        extra_meta={
            "seed": run_cfg.seed,
            "iterations": run_cfg.iterations,
            "corpus_fingerprint": corpus_fingerprint(corpus),
        },
    )
    return model, corpus, result, kept


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out = args.output_dir or cfg.output_dir
    if out is None:
        raise ConfigError("missing required config keys: output_dir")
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    ids, texts, labels, covars = _read_inputs(cfg, need_labels=True)
    stop = _stoplist_for(cfg)
    token_docs = [tokenize(t, stop) for t in texts]
    model, corpus, result, _ = _fit_on(cfg, token_docs, labels, covars, out)
    model_path = os.path.join(out, "model.npz")
    save_model(model, model_path)
    _write_manifest(
        out,
        {
            "command": "train",
            "config": _config_snapshot(cfg),
            "corpus_fingerprint": model.extra_meta["corpus_fingerprint"],
            "seed": cfg.seed,
            "n_docs": corpus.n_docs,
            "vocab_size": corpus.vocab_size,
            "label_names": corpus.label_names,
            "timings": {"seconds": round(time.perf_counter() - t0, 3)},
            "outputs": {"model": "model.npz", "trace": "trace.tsv"},
        },
    )
    final = result.trace[-1]
    print(f"trained {corpus.n_docs} docs, vocabulary {corpus.vocab_size}, "
          f"final total log-lik {final[3]:.1f}")
    print(f"model written to {model_path}")
    return 0


def cmd_predict(args) -> int:
    cfg = parse_config(args.config)
    out = args.output_dir or cfg.output_dir
    if out is None:
        raise ConfigError("missing required config keys: output_dir")
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    model = load_model(args.model)
    ids, texts, labels, covars = _read_inputs(cfg, need_labels=False)
    stop = _stoplist_for(cfg)
    docs = [model.vocabulary.encode_tokens(tokenize(t, stop)) for t in texts]

    encoder = model.covariate_encoder()
    if encoder is not None:
        if covars is None:
            raise ConfigError(
                f"model expects covariate columns {encoder.columns}; none configured"
            )
        unknown = [c for c in covars.columns if str(c) not in encoder.columns]
        if unknown:
            raise ConfigError(f"covariate columns unknown to the model: {unknown}")
        X = encoder.transform(covars)
    else:
        if cfg.covariate_columns:
            raise ConfigError("model was trained without covariates")
        X = None

    pred_ids, probs, _ = predict_corpus(model, docs, X, seed=cfg.seed)
    pred_path = os.path.join(out, "predictions.tsv")
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write("doc_id\tpredicted_label\t")
        fh.write("\t".join(f"p_{name}" for name in model.label_names) + "\n")
        for i, doc_id in enumerate(ids):
            row = "\t".join(f"{p:.6f}" for p in probs[i])
            fh.write(f"{doc_id}\t{model.label_names[pred_ids[i]]}\t{row}\n")
    _write_manifest(
        out,
        {
            "command": "predict",
            "config": _config_snapshot(cfg),
            "model": os.path.abspath(args.model),
            "n_docs": len(docs),
            "timings": {"seconds": round(time.perf_counter() - t0, 3)},
            "outputs": {"predictions": "predictions.tsv"},
        },
    )
    print(f"wrote {len(docs)} predictions to {pred_path}")
    return 0


def cmd_cv(args) -> int:
    cfg = parse_config(args.config)
    out = args.output_dir or cfg.output_dir
    if out is None:
        raise ConfigError("missing required config keys: output_dir")
    folds = args.folds or cfg.folds
    if folds < 2:
        raise ConfigError("folds must be at least 2")
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    ids, texts, labels, covars = _read_inputs(cfg, need_labels=True)
    stop = _stoplist_for(cfg)
    token_docs = [tokenize(t, stop) for t in texts]

    # Global label space and class filter; folds stratify inside it.
    global_vocab = build_vocabulary(token_docs, stoplist=None, rare_mass=cfg.rare_mass)
    full_corpus, _, kept = encode(
        token_docs, labels, covars, global_vocab, min_class_docs=cfg.min_class_docs
    )
    token_docs = [token_docs[i] for i in kept]
    covars = covars.iloc[list(kept)].reset_index(drop=True) if covars is not None else None
    assignment = split_folds(full_corpus, folds, cfg.seed)

    accuracies = []
    rows = []
    for f in range(folds):
        tr = assignment.train_indices(f)
        te = assignment.test_indices(f)
        for c, name in enumerate(full_corpus.label_names):
            if not np.any(full_corpus.labels[tr] == c):
                warnings.warn(
                    f"class {name!r} absent from training fold {f}; "
                    "its coefficients stay prior-only",
                    UserWarning,
                )
        vocab_f = build_vocabulary(
            [token_docs[i] for i in tr], stoplist=None, rare_mass=cfg.rare_mass
        )
        enc_f = None
        Xtr = np.zeros((tr.size, 0))
        Xte = np.zeros((te.size, 0))
        if covars is not None and len(covars.columns):
            enc_f = CovariateEncoder().fit(covars.iloc[tr])
            Xtr = enc_f.transform(covars.iloc[tr])
            Xte = enc_f.transform(covars.iloc[te])
        from .corpus import Corpus

        train_corpus = Corpus(
            docs=[vocab_f.encode_tokens(token_docs[i]) for i in tr],
            labels=full_corpus.labels[tr],
            covariates=Xtr,
            label_names=full_corpus.label_names,
            vocab_size=len(vocab_f),
        )
        run_cfg = _run_config(cfg)
        run_cfg.seed = derive_seed(cfg.seed, f)
        result = run_sampler(train_corpus, run_cfg)
        model = FittedModel(
            phi_bar=result.phi_bar,
            eta_mean=result.eta_mean,
            eta_draws=result.eta_draws,
            vocabulary=vocab_f,
            label_names=full_corpus.label_names,
            n_topics=run_cfg.n_topics,
            alpha=run_cfg.alpha,
            beta=run_cfg.beta,
            prior=run_cfg.prior,
            covariate_meta=enc_f.to_meta() if enc_f is not None else None,
            predict_passes=run_cfg.predict_passes,
            predict_burn=run_cfg.predict_burn,
        )
        test_docs = [vocab_f.encode_tokens(token_docs[i]) for i in te]
        preds, _, _ = predict_corpus(model, test_docs, Xte if enc_f else None, seed=run_cfg.seed)
        acc = float(np.mean(preds == full_corpus.labels[te]))
        accuracies.append(acc)
        rows.append((f, tr.size, te.size, acc))
        print(f"fold {f}: n_train={tr.size} n_test={te.size} accuracy={acc:.4f}")

    mean_acc = float(np.mean(accuracies))
    std_acc = float(np.std(accuracies, ddof=1)) if len(accuracies) > 1 else 0.0
    results_path = os.path.join(out, "cv_results.tsv")
    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write("fold\tn_train\tn_test\taccuracy\n")
        for f, ntr, nte, acc in rows:
            fh.write(f"{f}\t{ntr}\t{nte}\t{acc:.6f}\n")
    _write_manifest(
        out,
        {
            "command": "cv",
            "config": _config_snapshot(cfg),
            "corpus_fingerprint": corpus_fingerprint(full_corpus),
            "folds": folds,
            "fold_accuracies": accuracies,
            "mean_accuracy": mean_acc,
            "std_accuracy": std_acc,
            "timings": {"seconds": round(time.perf_counter() - t0, 3)},
            "outputs": {"results": "cv_results.tsv"},
        },
    )
    print(f"cv mean accuracy {mean_acc:.4f} (std {std_acc:.4f}) over {folds} folds")
    return 0


def cmd_report(args) -> int:
    out = args.output_dir
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    model = load_model(args.model)
    paths = write_report(model, out, top_n=args.top_n)
    _write_manifest(
        out,
        {
            "command": "report",
            "model": os.path.abspath(args.model),
            "top_n": args.top_n,
            "timings": {"seconds": round(time.perf_counter() - t0, 3)},
            "outputs": {k: os.path.basename(v) for k, v in paths.items()},
        },
    )
    print(f"report tables written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dolda",
        description="Supervised topic model: train, predict, cross-validate, report.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--output-dir", default=None)
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="score a corpus with a fitted model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--config", required=True)
    p_pred.add_argument("--output-dir", default=None)
    p_pred.set_defaults(func=cmd_predict)

    p_cv = sub.add_parser("cv", help="stratified cross-validation")
    p_cv.add_argument("--config", required=True)
    p_cv.add_argument("--output-dir", default=None)
    p_cv.add_argument("--folds", type=int, default=None)
    p_cv.set_defaults(func=cmd_cv)

    p_rep = sub.add_parser("report", help="emit topic/coefficient tables")
    p_rep.add_argument("--model", required=True)
    p_rep.add_argument("--output-dir", required=True)
    p_rep.add_argument("--top-n", type=int, default=10)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SamplerAbort, RuntimeError, OSError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
