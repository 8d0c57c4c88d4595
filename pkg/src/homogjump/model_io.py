"""Strict JSON schema for model description files.

Document layout::

    {
      "dimension": 1,
      "period": [1.0],
      "drift": null | FIELD,
      "diffusion": FIELD,
      "jumps": [
        {"intensity": FIELD,
         "sizes": {"kind": "atoms", "atoms": [{"w": 0.5, "y": [0.5]}, ...]}
                  | {"kind": "uniform_ball", "radius": 4.0},
         "symmetric": true}
      ]
    }

    FIELD = {"shape": "scalar" | "vector" | "matrix",
             "terms": [{"m": [0], "cos": ..., "sin": ...}]}

Unknown keys are rejected everywhere; errors carry the offending field path.
"""
from __future__ import annotations

import numpy as np

from .fields import Period, PeriodicField
from .model import ATOMS, UNIFORM_BALL, JumpFamily, Model, SizeDistribution


class ModelFormatError(ValueError):
    """The model document does not match the schema."""


def _take(obj: dict, path: str, required: tuple, optional: tuple = ()) -> dict:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{path}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ModelFormatError(f"{path}: unknown key {sorted(unknown)[0]!r}")
    for key in required:
        if key not in obj:
            raise ModelFormatError(f"{path}: missing key {key!r}")
    return obj


def _field_from_dict(doc: dict, period: Period, path: str) -> PeriodicField:
    _take(doc, path, ("shape", "terms"))
    terms = doc["terms"]
    if not isinstance(terms, list):
        raise ModelFormatError(f"{path}.terms: expected a list")
    parsed = []
    for i, term in enumerate(terms):
        _take(term, f"{path}.terms[{i}]", ("m", "cos", "sin"))
        parsed.append((term["m"], term["cos"], term["sin"]))
    try:
        return PeriodicField.from_terms(doc["shape"], period, parsed)
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc


def _sizes_from_dict(doc: dict, symmetric, dim: int, path: str) -> SizeDistribution:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ModelFormatError(f"{path}: expected an object with a 'kind' key")
    kind = doc["kind"]
    try:
        if kind == ATOMS:
            _take(doc, path, ("kind", "atoms"))
            atoms = doc["atoms"]
            weights, points = [], []
            for i, atom in enumerate(atoms):
                _take(atom, f"{path}.atoms[{i}]", ("w", "y"))
                weights.append(atom["w"])
                points.append(atom["y"])
            return SizeDistribution.atoms(weights, points, symmetric=symmetric)
        if kind == UNIFORM_BALL:
            _take(doc, path, ("kind", "radius"))
            if symmetric is False:
                raise ModelFormatError(f"{path}: uniform_ball is symmetric by construction")
            return SizeDistribution.uniform_ball(doc["radius"], dim)
    except ModelFormatError:
        raise
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    raise ModelFormatError(f"{path}.kind: unknown size distribution {kind!r}")


def model_from_dict(doc: dict) -> Model:
    _take(doc, "model", ("dimension", "period", "diffusion"), ("drift", "jumps"))
    try:
        dim = int(doc["dimension"])
        period = Period(np.asarray(doc["period"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"model: {exc}") from exc
    if period.dim != dim:
        raise ModelFormatError("model.period: length must equal the dimension")

    drift_doc = doc.get("drift")
    if drift_doc is None:
        drift = PeriodicField.zero("vector", period)
    else:
        drift = _field_from_dict(drift_doc, period, "model.drift")
    diffusion = _field_from_dict(doc["diffusion"], period, "model.diffusion")

    families = []
    for i, jump in enumerate(doc.get("jumps") or []):
        path = f"model.jumps[{i}]"
        _take(jump, path, ("intensity", "sizes"), ("symmetric",))
        intensity = _field_from_dict(jump["intensity"], period, f"{path}.intensity")
        sizes = _sizes_from_dict(jump["sizes"], jump.get("symmetric"), dim, f"{path}.sizes")
        families.append(JumpFamily(intensity, sizes))

    try:
        return Model(dim, period, drift, diffusion, tuple(families))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"model: {exc}") from exc


def _field_to_dict(field: PeriodicField) -> dict:
    terms = []
    for m, c, s in zip(field.freqs, field.cos_coef, field.sin_coef):
        terms.append({
            "m": [int(v) for v in m],
            "cos": c.tolist() if field.shape != "scalar" else float(c),
            "sin": s.tolist() if field.shape != "scalar" else float(s),
        })
    return {"shape": field.shape, "terms": terms}


def model_to_dict(m: Model) -> dict:
    jumps = []
    for fam in m.jumps:
        if fam.sizes.kind == ATOMS:
            sizes = {
                "kind": ATOMS,
                "atoms": [
                    {"w": float(w), "y": [float(v) for v in y]}
                    for w, y in zip(fam.sizes.weights, fam.sizes.points)
                ],
            }
        else:
            sizes = {"kind": UNIFORM_BALL, "radius": float(fam.sizes.radius)}
        jumps.append({
            "intensity": _field_to_dict(fam.intensity),
            "sizes": sizes,
            "symmetric": bool(fam.sizes.symmetric),
        })
    return {
        "dimension": m.dim,
        "period": [float(t) for t in m.period.tau],
        "drift": None if m.drift.is_zero() else _field_to_dict(m.drift),
        "diffusion": _field_to_dict(m.diffusion),
        "jumps": jumps,
    }
