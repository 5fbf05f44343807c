"""Canonical JSON: sorted keys, floats at 12 significant digits.

Byte-identical output for identical inputs, so solve runs are diffable.
"""
from __future__ import annotations

import json


def _canon(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):  # numpy scalar
        return _canon(obj.item())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=1)
