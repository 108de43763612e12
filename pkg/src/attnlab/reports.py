"""Serialization for experiment outputs.

JSON reports carry the full envelope (tool version, anchor, seed, config
echo) with sorted keys so identical runs produce identical bytes. CSV
payloads are RFC-4180 (CRLF line endings, quoted only when needed) and embed
the version/seed/anchor as constant columns, since the format has no comment
syntax. The parameter file is flat binary: magic ``INLA``, a little-endian
u32 version, then float64 payloads in declared order.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

TOOL_VERSION = "0.1.0"
PARAM_MAGIC = b"INLA"
PARAM_VERSION = 1


def report_envelope(anchor: str, seed: int, config_echo: dict, payload: dict) -> dict:
    return {
        "tool_version": TOOL_VERSION,
        "anchor": anchor,
        "seed": int(seed),
        "config": config_echo,
        "payload": payload,
    }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def write_csv(path, header: list[str], rows, *, anchor: str, seed: int) -> None:
    """RFC-4180 CSV with version/seed/anchor embedded as trailing columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = [TOOL_VERSION, str(int(seed)), anchor]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)  # csv default line terminator is CRLF
        writer.writerow(list(header) + ["tool_version", "seed", "anchor"])
        for row in rows:
            writer.writerow([_csv_cell(cell) for cell in row] + meta)


def _csv_cell(cell):
    if isinstance(cell, (np.integer,)):
        return int(cell)
    if isinstance(cell, (np.floating,)):
        return repr(float(cell))
    if isinstance(cell, float):
        return repr(cell)
    return cell


def save_params(path, arrays: list[np.ndarray]) -> None:
    """Write float64 arrays back to back after the magic and version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(struct.pack("<I", PARAM_VERSION))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_variant_params(path, projections, predictor=None, kernel=None) -> None:
    """Serialize attention parameters in declared order.

    Order: every head's w_q, then w_k, then w_v; the residual predictor's
    w1, b1, w2, b2 when present; the kernel's affine matrix and offset when
    present. The reader must know the same declaration (see
    :func:`load_variant_params`).
    """
    arrays = list(projections.w_q) + list(projections.w_k) + list(projections.w_v)
    if predictor is not None:
        arrays += [predictor.w1, predictor.b1, predictor.w2, predictor.b2]
    if kernel is not None and kernel.kind == "affine_relu":
        arrays += [kernel.a, kernel.b]
    save_params(path, [np.asarray(a, dtype=np.float64) for a in arrays])


def load_variant_params(path, model_dim: int, head_count: int,
                        with_predictor: bool = False,
                        predictor_hidden: int | None = None,
                        with_affine_kernel: bool = False):
    """Inverse of :func:`save_variant_params`; returns (projections, predictor, kernel)."""
    from .attention import ProjectionParams, ResidualPredictor
    from .kernels import affine_relu

    head_dim = model_dim // head_count
    shapes = [(model_dim, head_dim)] * (3 * head_count)
    hidden = predictor_hidden if predictor_hidden is not None else model_dim
    if with_predictor:
        shapes += [(model_dim, hidden), (hidden,), (hidden, 9), (9,)]
    if with_affine_kernel:
        shapes += [(head_dim, head_dim), (head_dim,)]
    arrays = load_params(path, shapes)
    h = head_count
    projections = ProjectionParams(arrays[:h], arrays[h:2 * h],
                                   arrays[2 * h:3 * h], h, model_dim, head_dim)
    cursor = 3 * h
    predictor = None
    if with_predictor:
        predictor = ResidualPredictor(*arrays[cursor:cursor + 4])
        cursor += 4
    kernel = None
    if with_affine_kernel:
        kernel = affine_relu(arrays[cursor], arrays[cursor + 1])
    return projections, predictor, kernel


def load_params(path, shapes: list[tuple]) -> list[np.ndarray]:
    """Read arrays of the declared shapes, validating magic and version."""
    raw = Path(path).read_bytes()
    if raw[:4] != PARAM_MAGIC:
        raise ConfigError(f"{path}: bad magic {raw[:4]!r}, expected {PARAM_MAGIC!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != PARAM_VERSION:
        raise ConfigError(f"{path}: unsupported parameter version {version}")
    offset = 8
    out = []
    for shape in shapes:
        count = int(np.prod(shape))
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise ConfigError(f"{path}: truncated parameter file")
        out.append(
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += nbytes
    if offset != len(raw):
        raise ConfigError(f"{path}: {len(raw) - offset} trailing bytes")
    return out
