"""Plottable report tables from a fitted model.

Everything is emitted as delimiter-separated data (not rendered figures):
top words per topic, coefficient posterior summaries with a signal flag,
and histogram bin counts of the shrunk coefficients.
"""

from __future__ import annotations

import numpy as np

from .predict import FittedModel


def coefficient_names(model: FittedModel) -> list[str]:
    names = ["intercept"]
    names += [f"topic_{k:02d}" for k in range(model.n_topics)]
    if model.covariate_meta is not None:
        names += list(model.covariate_meta["feature_names"])
    else:
        names += [f"x{j}" for j in range(model.n_covariates)]
    return names


def top_words_table(model: FittedModel, top_n: int = 10) -> list[tuple]:
    """(topic, rank, word, probability) rows, deterministic order."""
    rows = []
    for k in range(model.n_topics):
        order = np.argsort(-model.phi_bar[k], kind="stable")[:top_n]
        for rank, v in enumerate(order, start=1):
            rows.append((k, rank, model.vocabulary.types[v], float(model.phi_bar[k, v])))
    return rows


def coefficient_table(model: FittedModel) -> list[tuple]:
    """(class, coefficient, posterior_mean, q025, q975, signal) rows.

    Sorted per class by |posterior mean| descending; signal means the 95%
    central posterior interval excludes zero.
    """
    names = coefficient_names(model)
    q025 = np.quantile(model.eta_draws, 0.025, axis=0)
    q975 = np.quantile(model.eta_draws, 0.975, axis=0)
    mean = model.eta_draws.mean(axis=0)
    rows = []
    for l, label in enumerate(model.label_names):
        order = sorted(range(len(names)), key=lambda p: (-abs(mean[p, l]), p))
        for p in order:
            signal = bool(q025[p, l] > 0.0 or q975[p, l] < 0.0)
            rows.append(
                (label, names[p], float(mean[p, l]), float(q025[p, l]),
                 float(q975[p, l]), int(signal))
            )
    return rows


def coefficient_histogram(model: FittedModel, n_bins: int = 60) -> list[tuple]:
    """(prior, bin_left, bin_right, count) over all shrunk-coefficient
    posterior means (intercepts excluded), symmetric around zero."""
    mean = model.eta_draws.mean(axis=0)[1:, :].ravel()
    span = float(np.max(np.abs(mean))) if mean.size else 1.0
    span = span if span > 0 else 1.0
    edges = np.linspace(-span, span, n_bins + 1)
    counts, _ = np.histogram(mean, bins=edges)
    return [
        (model.prior.kind, float(edges[i]), float(edges[i + 1]), int(counts[i]))
        for i in range(n_bins)
    ]


def _write_tsv(path: str, header: tuple[str, ...], rows: list[tuple]) -> None:
    def fmt(v) -> str:
        if isinstance(v, float):
            return f"{v:.8g}"
        return str(v)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(v) for v in row) + "\n")


def write_report(model: FittedModel, output_dir: str, top_n: int = 10) -> dict[str, str]:
    """Write the three report tables; returns the path of each."""
    import os

    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "topics": os.path.join(output_dir, "topics.tsv"),
        "coefficients": os.path.join(output_dir, "coefficients.tsv"),
        "histogram": os.path.join(output_dir, "coefficient_histogram.tsv"),
    }
    _write_tsv(
        paths["topics"], ("topic", "rank", "word", "probability"), top_words_table(model, top_n)
    )
    _write_tsv(
        paths["coefficients"],
        ("class", "coefficient", "posterior_mean", "q025", "q975", "signal"),
        coefficient_table(model),
    )
    _write_tsv(
        paths["histogram"],
        ("prior", "bin_left", "bin_right", "count"),
        coefficient_histogram(model),
    )
    return paths
