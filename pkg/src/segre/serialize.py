"""JSON forms of spaces, tensors, maps, configurations and certificates."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .cross_norms import BoundDescriptor, FormWitness, NormCertificate
from .normed_space import SpaceSpec
from .options import OptimizerOptions
from .tensor_core import Decomposition, DenseTensor, PureTensor, materialize


class InputError(ValueError):
    """Malformed input file; the message carries the location when known."""


def _num(x: float):
    return "inf" if math.isinf(x) else float(x)


def _matrix(rows) -> list:
    return [[float(v) for v in row] for row in rows]


def space_to_dict(space: SpaceSpec) -> dict:
    if space.kind == "ellipsoid":
        return {"dim": space.dim, "norm": {"type": "ellipsoid", "A": _matrix(space.A)}}
    norm = {"type": "lp", "p": _num(space.p)}
    if space.transform is not None:
        norm["transform"] = _matrix(space.transform)
    return {"dim": space.dim, "norm": norm}


def space_from_dict(d: dict) -> SpaceSpec:
    if not isinstance(d, dict) or "dim" not in d:
        raise InputError("a space must be a JSON object with a 'dim' entry")
    norm = d.get("norm", {"type": "lp", "p": 2.0})
    kind = norm.get("type", "lp")
    if kind == "ellipsoid":
        space = SpaceSpec.ellipsoid(np.asarray(norm["A"], dtype=float))
    elif kind == "lp":
        space = SpaceSpec.lp(int(d["dim"]), float(norm.get("p", 2.0)), norm.get("transform"))
    else:
        raise InputError(f"unknown norm type {kind!r}")
    if space.dim != int(d["dim"]):
        raise InputError("'dim' does not match the norm data")
    return space


def _modes(d: dict):
    if "modes" not in d:
        raise InputError("missing 'modes'")
    return tuple(space_from_dict(m) for m in d["modes"])


def tensor_to_dict(z) -> dict:
    modes = [space_to_dict(m) for m in z.modes]
    if isinstance(z, PureTensor):
        return {"modes": modes, "factors": [np.asarray(f).tolist() for f in z.factors]}
    if isinstance(z, Decomposition):
        return {"modes": modes, "terms": [[np.asarray(f).tolist() for f in t.factors] for t in z.terms]}
    return {"modes": modes, "coords": np.asarray(z.coords).ravel().tolist()}


def tensor_from_dict(d: dict):
    """A DenseTensor, PureTensor or Decomposition depending on the keys present."""
    modes = _modes(d)
    if "coords" in d:
        coords = np.asarray(d["coords"], dtype=float)
        dims = tuple(m.dim for m in modes)
        if coords.size != int(np.prod(dims)):
            raise InputError(f"'coords' has {coords.size} entries, expected {int(np.prod(dims))}")
        return DenseTensor(modes, coords.reshape(dims))  # row-major, first mode slowest
    if "factors" in d:
        return PureTensor(modes, tuple(np.asarray(f, dtype=float) for f in d["factors"]))
    if "terms" in d:
        return Decomposition(modes, tuple(tuple(np.asarray(f, dtype=float) for f in t) for t in d["terms"]))
    raise InputError("a tensor needs 'coords', 'factors' or 'terms'")


def dense(z) -> DenseTensor:
    if isinstance(z, PureTensor):
        return z.dense()
    if isinstance(z, Decomposition):
        return materialize(z)
    return z


def map_to_dict(T) -> dict:
    return {"codomain": space_to_dict(T.codomain), "modes": [space_to_dict(m) for m in T.modes],
            "coeffs": np.asarray(T.coeffs).tolist()}


def map_from_dict(d: dict):
    from .sigma_operators import MultilinearMap

    return MultilinearMap(space_from_dict(d["codomain"]), _modes(d), np.asarray(d["coeffs"], dtype=float))


def config_from_dict(d: dict, seed: int | None = None):
    from .experiments import ExperimentConfig

    known = {"spaces", "r", "trials", "seed", "optimizer", "experiment", "r_max", "workers"}
    unknown = set(d) - known
    if unknown:
        raise InputError(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {k: d[k] for k in ("r", "trials", "experiment", "r_max", "workers") if k in d}
    kwargs["seed"] = int(seed if seed is not None else d.get("seed", 0))
    kwargs["optimizer"] = OptimizerOptions.from_dict(d.get("optimizer", {}))
    return ExperimentConfig(tuple(space_from_dict(s) for s in d["spaces"]), **kwargs)


def config_to_dict(cfg) -> dict:
    """Everything that determines the results; the worker count is left out on purpose."""
    return {"spaces": [space_to_dict(s) for s in cfg.spaces], "r": cfg.r, "trials": cfg.trials,
            "seed": cfg.seed, "optimizer": cfg.optimizer.to_dict(), "experiment": cfg.experiment,
            "r_max": cfg.r_max}


def _witness(w):
    if w is None:
        return None
    if isinstance(w, FormWitness):
        return {"type": "form", "method": w.method, "norm_upper": w.norm_upper, "coeffs": np.asarray(w.coeffs).tolist()}
    if isinstance(w, Decomposition):
        return {"type": "decomposition", **tensor_to_dict(w)}
    if isinstance(w, BoundDescriptor):
        details = {k: v for k, v in w.details.items() if isinstance(v, (bool, int, float, str, list))}
        return {"type": "bound", "method": w.method, "value": w.value, "details": details}
    return {"type": "functionals", "coords": [np.asarray(f).tolist() for f in w]}


def certificate_to_dict(c: NormCertificate) -> dict:
    return {"kind": c.kind.value, "lower": c.lower, "upper": c.upper, "gap": c.gap,
            "converged": bool(c.converged), "iterations": int(c.iterations),
            "lower_witness": _witness(c.lower_witness), "upper_witness": _witness(c.upper_witness)}


def load_json(path) -> object:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


__all__ = [
    "InputError",
    "atomic_write",
    "certificate_to_dict",
    "config_from_dict",
    "config_to_dict",
    "dense",
    "dumps",
    "load_json",
    "map_from_dict",
    "map_to_dict",
    "space_from_dict",
    "space_to_dict",
    "tensor_from_dict",
    "tensor_to_dict",
]
