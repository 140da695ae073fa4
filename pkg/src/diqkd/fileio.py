"""JSON file format for matrices, states and observable pairs.

A single matrix::

    {"dim": 2, "entries": [[1, 0], [0, 0], [0, 0], [-1, 0]]}

``entries`` is row-major, one ``[re, im]`` pair per element. An observable
pair file holds two such objects under ``"matrices"``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .linalg import BinaryObservable, DensityOperator, ValidationError, as_matrix


def matrix_to_dict(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "dim": int(m.shape[0]),
        "entries": [[float(z.real), float(z.imag)] for z in m.ravel()],
    }


def matrix_from_dict(doc: dict) -> np.ndarray:
    if not isinstance(doc, dict) or "dim" not in doc or "entries" not in doc:
        raise ValidationError("matrix document has fields dim and entries")
    dim = doc["dim"]
    if not isinstance(dim, int) or dim <= 0:
        raise ValidationError("dim is a positive integer", repr(dim))
    entries = doc["entries"]
    if not isinstance(entries, list) or len(entries) != dim * dim:
        n = len(entries) if isinstance(entries, list) else "?"
        raise ValidationError("entries count equals rows x cols", f"{n} != {dim * dim}")
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in entries])
    except (TypeError, ValueError) as exc:
        raise ValidationError("entries are [re, im] pairs", str(exc)) from None
    if not np.all(np.isfinite(arr)):
        raise ValidationError("entries finite")
    return arr.reshape(dim, dim)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("file is valid JSON", str(exc)) from None


def load_state(path) -> DensityOperator:
    return DensityOperator(matrix_from_dict(_read_json(path)))


def save_matrix(path, m) -> None:
    Path(path).write_text(json.dumps(matrix_to_dict(m)) + "\n")


def load_observable_pair(path) -> tuple[BinaryObservable, BinaryObservable]:
    doc = _read_json(path)
    mats = doc.get("matrices") if isinstance(doc, dict) else None
    if not isinstance(mats, list) or len(mats) != 2:
        raise ValidationError("observable file holds exactly two matrices")
    a0, a1 = (BinaryObservable(matrix_from_dict(d)) for d in mats)
    if a0.dim != a1.dim:
        raise ValidationError("observables share a dimension", f"{a0.dim} != {a1.dim}")
    return a0, a1


def save_observable_pair(path, a0, a1) -> None:
    doc = {"matrices": [matrix_to_dict(as_matrix(a0)), matrix_to_dict(as_matrix(a1))]}
    Path(path).write_text(json.dumps(doc) + "\n")
