"""The nine benchmarked predictors, keyed by registry name."""

from .base import (
    Axis,
    DivergenceError,
    FitError,
    HyperparamSpace,
    ModelError,
    PredictionError,
    Predictor,
    load_model,
)
from .kernel import GpModel, SvrModel
from .linear import ArModel, ArxModel, BaseModel, PolyModel
from .neural import ElmModel, FfnnModel, LstmModel

MODELS: dict[str, type[Predictor]] = {
    cls.kind: cls
    for cls in (BaseModel, PolyModel, ArModel, ArxModel,
                SvrModel, GpModel, ElmModel, FfnnModel, LstmModel)
}

MODEL_ORDER = tuple(MODELS)

DISPLAY_NAMES = {
    "base": "Base", "poly": "Poly", "ar": "AR", "arx": "ARX",
    "svr": "SVR", "gp": "GP", "elm": "ELM", "ffnn": "FFNN", "lstm": "LSTM",
}


def create(kind: str, hp: dict | None = None, seed: int = 0) -> Predictor:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise KeyError(f"unknown model kind {kind!r}; known: {sorted(MODELS)}") from None
    return cls(hp=hp, seed=seed)


__all__ = [
    "MODELS", "MODEL_ORDER", "DISPLAY_NAMES", "create", "load_model",
    "Predictor", "Axis", "HyperparamSpace",
    "ModelError", "FitError", "DivergenceError", "PredictionError",
    "BaseModel", "PolyModel", "ArModel", "ArxModel",
    "SvrModel", "GpModel", "ElmModel", "FfnnModel", "LstmModel",
]
