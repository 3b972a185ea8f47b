"""Deterministic JSON reports.

Floats are written with 17 significant digits so every double round-trips;
non-finite values become the strings "inf", "-inf" and "nan".  Key order is
insertion order, so two runs with the same inputs produce identical bytes
apart from the ``wall_time_s`` fields.
"""

import dataclasses
import hashlib
import json
import math
from importlib import resources

import numpy as np

from . import __version__

SCHEMA_ID = "stocheck-report/1"


def to_jsonable(obj):
    """Plain dict/list/str/number tree for dataclasses, arrays and numpy scalars."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, range)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _float(x):
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _encode(obj, out):
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, list):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    out = []
    _encode(to_jsonable(obj), out)
    return "".join(out) + "\n"


def digest(data):
    return hashlib.sha256(data).hexdigest()


def new_report(command, args, input_bytes=None, input_path=None):
    return {
        "schema": SCHEMA_ID,
        "tool": {"name": "stocheck", "version": __version__},
        "input": {"path": input_path, "sha256": digest(input_bytes) if input_bytes is not None else None},
        "command": {"name": command, "args": args},
        "results": [],
        "status": "ok",
    }


def load_schema():
    return json.loads(resources.files("stocheck").joinpath("report.schema.json").read_text())
