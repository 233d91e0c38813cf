"""Single-file model archive.

Layout::

    b"DLSTA"                      magic
    uint16 little-endian          format version
    uint64 little-endian          header length in bytes
    header                        UTF-8 JSON, sorted keys
    array payload                 raw little-endian array bytes

The header lists every array with its dtype, shape and byte offset into the
payload. Nothing time- or host-dependent is written, so equal models give
equal bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import PipelineConfig, config_from_dict
from .decoder import MlknnModel
from .encoder import LatentCodes
from .regressor import KernelRegressor, KernelSpec

MAGIC = b"DLSTA"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelArchive:
    method: str
    config: PipelineConfig
    seed: int
    label_names: tuple
    n_features: int
    top_r: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    train_codes: Optional[LatentCodes] = None
    regressor: Optional[KernelRegressor] = None
    mlknn: Optional[MlknnModel] = None
    format_version: int = FORMAT_VERSION
    info: dict = field(default_factory=dict)


def _arrays(a: ModelArchive) -> dict:
    arrays = {"feature_mean": a.feature_mean, "feature_std": a.feature_std}
    if a.train_codes is not None:
        arrays["train_codes"] = a.train_codes.codes
    if a.regressor is not None:
        r = a.regressor
        arrays.update(
            regressor_basis=r.basis,
            regressor_coeffs=r.coeffs,
            regressor_offset=r.offset,
            regressor_scale=r.scale,
        )
    if a.mlknn is not None:
        m = a.mlknn
        arrays.update(
            mlknn_priors=m.priors,
            mlknn_posteriors=m.posteriors,
            mlknn_counts=m.counts,
            mlknn_points=m.reference_points,
            mlknn_labels=m.reference_labels,
        )
    return arrays


def to_bytes(a: ModelArchive) -> bytes:
    table = []
    blobs = []
    offset = 0
    for name, arr in _arrays(a).items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        raw = arr.astype(dt, copy=False).tobytes()
        table.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": a.format_version,
        "method": a.method,
        "seed": a.seed,
        "config": a.config.to_dict(),
        "label_names": list(a.label_names),
        "n_features": a.n_features,
        "top_r": a.top_r,
        "arrays": table,
    }
    if a.regressor is not None:
        r = a.regressor
        header["regressor"] = {
            "kernel": r.kernel.kind,
            "rbf_gamma": r.kernel.rbf_gamma,
            "lam": r.lam,
            "mode": r.mode,
        }
    if a.mlknn is not None:
        header["mlknn"] = {"k": a.mlknn.k, "smoothing": a.mlknn.smoothing}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<HQ", a.format_version, len(hb)) + hb + b"".join(blobs)


def read_header(data: bytes) -> tuple[dict, int]:
    if not data.startswith(MAGIC):
        raise ArchiveError("not a model archive (bad magic)")
    try:
        version, hlen = struct.unpack_from("<HQ", data, len(MAGIC))
    except struct.error as exc:
        raise ArchiveError("truncated archive header") from exc
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported archive format version {version} (expected {FORMAT_VERSION})")
    start = len(MAGIC) + struct.calcsize("<HQ")
    header = json.loads(data[start : start + hlen].decode("utf-8"))
    return header, start + hlen


def from_bytes(data: bytes) -> ModelArchive:
    header, payload = read_header(data)
    arrays = {}
    for entry in header["arrays"]:
        lo = payload + entry["offset"]
        buf = data[lo : lo + entry["nbytes"]]
        if len(buf) != entry["nbytes"]:
            raise ArchiveError(f"truncated array {entry['name']!r}")
        arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        arr.setflags(write=False)
        arrays[entry["name"]] = arr

    regressor = None
    if "regressor" in header:
        h = header["regressor"]
        regressor = KernelRegressor(
            KernelSpec(h["kernel"], h["rbf_gamma"]),
            arrays["regressor_basis"],
            arrays["regressor_coeffs"],
            h["lam"],
            h["mode"],
            arrays["regressor_offset"],
            arrays["regressor_scale"],
        )
    mlknn = None
    if "mlknn" in header:
        h = header["mlknn"]
        mlknn = MlknnModel(
            h["k"],
            h["smoothing"],
            arrays["mlknn_priors"],
            arrays["mlknn_posteriors"],
            arrays["mlknn_counts"],
            arrays["mlknn_points"],
            arrays["mlknn_labels"],
        )
    codes = LatentCodes(arrays["train_codes"]) if "train_codes" in arrays else None
    return ModelArchive(
        method=header["method"],
        config=config_from_dict(header["config"]).with_seed(header["seed"]),
        seed=header["seed"],
        label_names=tuple(header["label_names"]),
        n_features=header["n_features"],
        top_r=header["top_r"],
        feature_mean=arrays["feature_mean"],
        feature_std=arrays["feature_std"],
        train_codes=codes,
        regressor=regressor,
        mlknn=mlknn,
        format_version=header["format_version"],
    )


def save_archive(a: ModelArchive, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(a))


def load_archive(path) -> ModelArchive:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
