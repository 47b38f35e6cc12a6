"""Flat key=value run configuration.

One documented key per line, '#' comments, blank lines ignored.  Unknown
keys are rejected with the full offender list so typos fail loudly before
any work starts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


class ConfigError(ValueError):
    """Invalid configuration file or missing required keys."""


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_delimiter(raw: str) -> str:
    return {"\\t": "\t", "tab": "\t", "comma": ","}.get(raw, raw)


def _parse_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


# key -> (parser, default); None default means "unset"
KEYS: dict[str, tuple[Any, Any]] = {
    # corpus input
    "corpus_table": (str, None),
    "corpus_dir": (str, None),
    "metadata_file": (str, None),
    "text_column": (str, "text"),
    "label_column": (str, None),
    "doc_id_column": (str, None),
    "covariate_columns": (_parse_list, ()),
    "delimiter": (_parse_delimiter, ","),
    # preprocessing
    "stoplist": (str, "default"),
    "rare_mass": (float, 0.01),
    "min_class_docs": (int, 10),
    # model
    "n_topics": (int, 20),
    "alpha": (float, 0.1),
    "beta": (float, 0.01),
    "prior": (str, "horseshoe"),
    "c": (float, 100.0),
    # schedule
    "iterations": (int, 2000),
    "burn_in": (int, 1000),
    "phi_mean_window": (int, None),
    "thinning": (int, 5),
    "seed": (int, 0),
    "workers": (int, 1),
    "checkpoint_every": (int, 0),
    # prediction
    "predict_passes": (int, 200),
    "predict_burn": (int, 100),
    # cross-validation / reporting
    "folds": (int, 5),
    "top_n": (int, 10),
    # outputs
    "output_dir": (str, None),
}


@dataclass
class Config:
    values: dict[str, Any]

    def __getattr__(self, name: str):
        try:
            return self.values[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def require(self, *names: str) -> None:
        missing = [n for n in names if self.values.get(n) is None]
        if missing:
            raise ConfigError(f"missing required config keys: {', '.join(missing)}")


def parse_config(path: str, overrides: dict[str, str] | None = None) -> Config:
    """Read and validate a config file; CLI overrides are applied last."""
    raw: dict[str, str] = {}
    bad_lines: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                bad_lines.append(f"line {lineno}: no '=' in {line!r}")
                continue
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    if overrides:
        raw.update(overrides)

    unknown = sorted(k for k in raw if k not in KEYS)
    problems = list(bad_lines)
    if unknown:
        problems.append(f"unknown config keys: {', '.join(unknown)}")
    values: dict[str, Any] = {k: default for k, (_, default) in KEYS.items()}
    for key, text in raw.items():
        if key not in KEYS:
            continue
        parser, _ = KEYS[key]
        try:
            values[key] = parser(text)
        except (ValueError, TypeError) as exc:
            problems.append(f"bad value for {key}: {text!r} ({exc})")
    if problems:
        raise ConfigError("; ".join(problems))

    if values["phi_mean_window"] is None:
        span = values["iterations"] - values["burn_in"]
        values["phi_mean_window"] = max(1, min(500, span))
    return Config(values=values)
