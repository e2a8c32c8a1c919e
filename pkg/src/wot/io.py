"""JSON schemas and deterministic report serialization."""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np

from .convexkit import SampledFunction
from .measures import Coupling, DiscreteMeasure, StructuralError


class SchemaError(ValueError):
    pass


def measure_to_dict(m: DiscreteMeasure) -> dict:
    return {"dim": m.dim, "points": m.points.tolist(), "weights": m.weights.tolist()}


def measure_from_dict(d: dict) -> DiscreteMeasure:
    try:
        pts = np.asarray(d["points"], dtype=float)
        w = np.asarray(d["weights"], dtype=float)
        dim = int(d["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad measure object: {exc}") from exc
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise SchemaError("measure dim field does not match the points")
    try:
        return DiscreteMeasure(pts, w)
    except StructuralError as exc:
        raise SchemaError(str(exc)) from exc


def coupling_to_dict(pi: Coupling) -> dict:
    return {
        "mu": measure_to_dict(pi.mu),
        "nu": measure_to_dict(pi.nu),
        "matrix": pi.matrix.tolist(),
    }


def coupling_from_dict(d: dict) -> Coupling:
    try:
        mu = measure_from_dict(d["mu"])
        nu = measure_from_dict(d["nu"])
        mat = np.asarray(d["matrix"], dtype=float)
    except KeyError as exc:
        raise SchemaError(f"coupling object missing {exc}") from exc
    try:
        return Coupling(mu, nu, mat)
    except StructuralError as exc:
        raise SchemaError(str(exc)) from exc


def sampled_function_to_dict(f: SampledFunction) -> dict:
    vals = ["inf" if not math.isfinite(v) else v for v in f.values.tolist()]
    return {"dim": f.dim, "sites": f.sites.tolist(), "values": vals}


def sampled_function_from_dict(d: dict) -> SampledFunction:
    try:
        sites = np.asarray(d["sites"], dtype=float)
        vals = np.array([math.inf if v == "inf" else float(v) for v in d["values"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad sampled_function object: {exc}") from exc
    if sites.ndim == 1:
        sites = sites[:, None]
    if sites.shape[1] != int(d["dim"]):
        raise SchemaError("sampled_function dim mismatch")
    return SampledFunction(sites, vals)


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read JSON from {path}: {exc}") from exc


def canonical_json(obj) -> str:
    """Deterministic serialization: sorted keys, fixed float formatting."""
    return json.dumps(_canon(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _canon(obj):
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".wot-tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def coupling_csv(pi: Coupling) -> str:
    """Delimited export: one row per support pair with mass."""
    lines = ["i,j,x,y,mass"]
    for i in range(pi.mu.n):
        for j in range(pi.nu.n):
            x = ";".join(repr(float(v)) for v in pi.mu.points[i])
            y = ";".join(repr(float(v)) for v in pi.nu.points[j])
            lines.append(f"{i},{j},{x},{y},{float(pi.matrix[i, j])!r}")
    return "\n".join(lines) + "\n"
