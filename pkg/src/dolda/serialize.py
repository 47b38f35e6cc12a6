"""Deterministic model bundles.

A bundle is a zip archive that ``numpy.load`` can open like any ``.npz``:
one ``.npy`` member per array plus a ``meta.json`` member.  Members are
written in sorted order with a fixed timestamp and no compression, so
saving the same state twice gives byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from typing import Any

import numpy as np

SCHEMA_VERSION = 1

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _json_bytes(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_bundle(path: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``arrays`` plus a json header to ``path`` deterministically."""
    meta = dict(meta)
    meta.setdefault("schema_version", SCHEMA_VERSION)
    members: list[tuple[str, bytes]] = [("meta.json", _json_bytes(meta))]
    for name in sorted(arrays):
        if "/" in name or name.startswith("meta."):
            raise ValueError(f"bad array name: {name!r}")
        buf = io.BytesIO()
        np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
        members.append((name + ".npy", buf.getvalue()))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in members:
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)


def load_bundle(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back a bundle written by :func:`save_bundle`."""
    arrays: dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path, "r") as zf:
        names = zf.namelist()
        if "meta.json" not in names:
            raise ValueError(f"{path}: not a model bundle (no meta.json)")
        meta = json.loads(zf.read("meta.json").decode("utf-8"))
        for name in names:
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(
                    io.BytesIO(zf.read(name)), allow_pickle=False
                )
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema version {version!r} not supported (expected {SCHEMA_VERSION})"
        )
    return meta, arrays
