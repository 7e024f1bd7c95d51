"""Closed-form surface families and their module-level operations."""
from __future__ import annotations

import json

import numpy as np

from ..errors import AnsatzNotPositive, InvalidModelParameters
from ..hermitian import MetricField
from .base import AnsatzState, Generator, LimitForm, SampleSet, SurfaceModel, check_ansatz
from .elliptic import EllipticBundle, hyperbolic_distance, octagon_group
from .hopf import Hopf
from .inoue import InoueSM, InoueSMinus, InoueSPlus
from .torus import Torus

FAMILIES = {cls.family: cls for cls in (Hopf, InoueSM, InoueSPlus, InoueSMinus, EllipticBundle, Torus)}


def default_model(name: str) -> SurfaceModel:
    """Named default instances used by tests and the command line."""
    if name == "hopf":
        return Hopf((2.0, 2.0))
    if name == "hopf3":
        return Hopf((2.0, 2.0, 2.0))
    if name == "inoue-sm":
        return InoueSM()
    if name == "inoue-splus":
        return InoueSPlus()
    if name == "inoue-splus-m1":
        model = InoueSPlus()
        return InoueSPlus(model.N, shift=1j * np.log(model.alpha))
    if name == "inoue-sminus":
        return InoueSMinus()
    if name == "elliptic":
        return EllipticBundle()
    if name == "torus":
        return Torus()
    raise InvalidModelParameters(f"unknown model {name!r}")


def initial_metric(model: SurfaceModel) -> MetricField:
    """The starting metric ``omega(0)`` as a field (default time 0)."""
    return model.flow_field().at(0.0)


def closed_form_metric(model: SurfaceModel, t: float) -> MetricField:
    """The exact solution at time ``t``; raises ``TimeOutOfRange`` outside ``[0, T)``."""
    model.check_time(t)
    return model.flow_field().at(t)


def max_existence_time(model: SurfaceModel) -> float:
    return model.max_existence_time()


def ansatz_ricci(model: SurfaceModel, state: AnsatzState) -> np.ndarray:
    """Time derivative of the ansatz coefficients (minus the Ricci coefficients)."""
    check_ansatz(model, state.coefficients)
    return model.ansatz_velocity(state)


def limit_form(model: SurfaceModel) -> LimitForm:
    return LimitForm(model.limit_matrix, model.limit_kind, model.limit_degenerate())


def sample_fundamental_domain(model: SurfaceModel, density=None, seed: int = 0) -> SampleSet:
    return model.sample(seed=seed) if density is None else model.sample(density, seed=seed)


def generators(model: SurfaceModel) -> list[Generator]:
    return model.generators()


# -- serialisation -----------------------------------------------------------

def _encode(v):
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(np.real(v)), "im": float(np.imag(v))}
    if isinstance(v, np.ndarray):
        if np.iscomplexobj(v):
            return {"re": v.real.tolist(), "im": v.imag.tolist()}
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    return v


def _decode(v):
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return np.asarray(v["re"]) + 1j * np.asarray(v["im"])
    return v


def model_to_dict(model: SurfaceModel) -> dict:
    derived = {k: _encode(v) for k, v in model.derived().items()}
    derived["derived"] = True
    return {"family": model.family,
            "params": {k: _encode(v) for k, v in model.params.items()},
            "derived": derived}


def model_to_json(model: SurfaceModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def model_from_dict(data: dict) -> SurfaceModel:
    family = data.get("family")
    if family not in FAMILIES:
        raise InvalidModelParameters(f"unknown family {family!r}")
    params = {k: _decode(v) for k, v in data.get("params", {}).items()}
    if family == "elliptic" and "alpha" in params:
        params["alpha"] = complex(params["alpha"])
    if family == "inoue-splus" and "shift" in params:
        params["shift"] = complex(params["shift"])
    if family == "hopf":
        params["alphas"] = np.asarray(params["alphas"], complex)
    model = FAMILIES[family](**params)
    stored = data.get("derived")
    if stored:
        fresh = model_to_dict(model)["derived"]
        for key, val in stored.items():
            if key in fresh and not _close(fresh[key], val):
                raise InvalidModelParameters(f"derived value {key!r} disagrees with the parameters")
    return model


def model_from_json(text: str) -> SurfaceModel:
    return model_from_dict(json.loads(text))


def _close(a, b):
    try:
        return np.allclose(np.asarray(_decode(a), complex), np.asarray(_decode(b), complex), rtol=1e-9, atol=1e-12)
    except (TypeError, ValueError):
        return a == b


__all__ = [
    "AnsatzState", "Generator", "LimitForm", "SampleSet", "SurfaceModel", "Hopf", "InoueSM",
    "InoueSPlus", "InoueSMinus", "EllipticBundle", "Torus", "FAMILIES", "default_model",
    "initial_metric", "closed_form_metric", "max_existence_time", "ansatz_ricci", "limit_form",
    "sample_fundamental_domain", "generators", "model_to_json", "model_from_json",
    "model_to_dict", "model_from_dict", "hyperbolic_distance", "octagon_group", "AnsatzNotPositive",
]
