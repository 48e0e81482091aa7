"""Versioned JSON orbit files.

Schema ``symindex-orbit`` version 1::

    {
      "format": "symindex-orbit",
      "version": 1,
      "name": "my_orbit",            optional
      "n": 2, "T": 6.283, "h": -0.5,
      "A": [[...], ...],             n x n, orthogonal
      "grid": [0.0, ..., 1.0],       strictly increasing, spans [0, 1]
      "P": [[[...]]], "Q": ..., "R": ...      one n x n matrix per grid point
      "Lq": [[...]], "xprime": [[...]]        one n-vector per grid point
      "xsecond": [[...]],            optional; spline derivative of xprime otherwise
      "tprime_h": 18.85              optional; null or absent means unknown
    }

Floats are written with ``repr`` precision so a save/load cycle is exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidOrbit
from .orbit_model import OrbitData

__all__ = ["ORBIT_FORMAT", "ORBIT_VERSION", "orbit_to_dict", "orbit_from_dict", "save_orbit", "load_orbit"]

ORBIT_FORMAT = "symindex-orbit"
ORBIT_VERSION = 1
_REQUIRED = ("n", "T", "h", "A", "grid", "P", "Q", "R", "Lq", "xprime")


def orbit_to_dict(orbit: OrbitData) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "format": ORBIT_FORMAT,
        "version": ORBIT_VERSION,
        "name": orbit.name,
        "n": orbit.n,
        "T": float(orbit.T),
        "h": float(orbit.h),
        "A": orbit.A.tolist(),
        "grid": orbit.grid.tolist(),
    }
    for key in ("P", "Q", "R", "Lq", "xprime"):
        doc[key] = getattr(orbit, key).tolist()
    if orbit.xsecond is not None:
        doc["xsecond"] = orbit.xsecond.tolist()
    doc["tprime_h"] = None if orbit.tprime_h is None else float(orbit.tprime_h)
    return doc


def orbit_from_dict(doc: dict[str, Any]) -> OrbitData:
    if doc.get("format") != ORBIT_FORMAT:
        raise InvalidOrbit(f"not a {ORBIT_FORMAT} document")
    if doc.get("version") != ORBIT_VERSION:
        raise InvalidOrbit(f"unsupported {ORBIT_FORMAT} version {doc.get('version')!r}")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise InvalidOrbit("missing fields: " + ", ".join(missing))
    try:
        arrays = {k: np.asarray(doc[k], dtype=float) for k in ("A", "grid", "P", "Q", "R", "Lq", "xprime")}
        xsecond = np.asarray(doc["xsecond"], dtype=float) if doc.get("xsecond") is not None else None
        tprime = doc.get("tprime_h")
        return OrbitData(n=int(doc["n"]), T=float(doc["T"]), h=float(doc["h"]), xsecond=xsecond,
                         tprime_h=None if tprime is None else float(tprime),
                         name=str(doc.get("name", "orbit")), **arrays)
    except (TypeError, ValueError) as err:
        raise InvalidOrbit(f"malformed orbit document: {err}") from err


def save_orbit(orbit: OrbitData, path: str | Path) -> None:
    Path(path).write_text(json.dumps(orbit_to_dict(orbit), indent=1) + "\n", encoding="utf-8")


def load_orbit(path: str | Path) -> OrbitData:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise InvalidOrbit(f"{path}: not valid JSON ({err})") from err
    return orbit_from_dict(doc)
