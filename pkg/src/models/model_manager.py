import json
import os

import numpy as np
from safetensors import safe_open
from safetensors.numpy import save_file

from ..errors import ModelFormatError
from ..utils import log
from .forest import Forest, ForestConfig
from .gbdt import BoostConfig, BoostedEnsemble
from .learners import FittedLearner, LearnerSpec
from .naive_bayes import GaussianNB, MeanImputer
from .tree import Tree

FORMAT_NAME = "softbrier-model"
FORMAT_VERSION = 2
HEADER_KEY = "softbrier"

_TREE_ARRAYS = {
    "feature": np.int64,
    "threshold": np.float64,
    "default_left": np.uint8,
    "left": np.int64,
    "right": np.int64,
    "value": np.float64,
    "gain": np.float64,
    "stats": np.float64,
}


def model_type_of(model) -> str:
    from ..pipelines.stacking import StackedModel

    for cls, tag in ((BoostedEnsemble, "gbdt"), (Forest, "forest"), (GaussianNB, "naive_bayes"),
                     (FittedLearner, "learner"), (StackedModel, "stack"), (Tree, "tree")):
        if isinstance(model, cls):
            return tag
    raise ModelFormatError(f"cannot persist objects of type {type(model).__name__}")


def _pack_tree(t: Tree, prefix, tensors):
    for name, dtype in _TREE_ARRAYS.items():
        tensors[f"{prefix}.{name}"] = np.ascontiguousarray(getattr(t, name), dtype=dtype)
    return {"kind": t.kind, "n_features": t.n_features}


def _unpack_tree(layout, prefix, tensors) -> Tree:
    arrays = {name: tensors[f"{prefix}.{name}"] for name in _TREE_ARRAYS}
    arrays["default_left"] = arrays["default_left"].astype(bool)
    return Tree(kind=layout["kind"], n_features=layout["n_features"], **arrays)


def _pack(model, prefix, tensors):
    tag = model_type_of(model)
    layout = {"type": tag}
    if tag == "tree":
        layout.update(_pack_tree(model, prefix, tensors))
    elif tag == "gbdt":
        tensors[f"{prefix}.base_score"] = np.ascontiguousarray(model.base_score, dtype=np.float64)
        layout["rounds"] = [[_pack_tree(t, f"{prefix}.r{r}.c{c}", tensors) for c, t in enumerate(trees)]
                            for r, trees in enumerate(model.rounds)]
        layout.update(config=model.config.to_dict(), best_round=model.best_round, n_classes=model.n_classes,
                      n_features=model.n_features, history=model.history)
    elif tag == "forest":
        layout["trees"] = [_pack_tree(t, f"{prefix}.t{i}", tensors) for i, t in enumerate(model.trees)]
        layout.update(config=model.config.to_dict(), n_classes=model.n_classes, n_features=model.n_features)
    elif tag == "naive_bayes":
        for name in ("priors", "means", "variances"):
            tensors[f"{prefix}.{name}"] = np.ascontiguousarray(getattr(model, name), dtype=np.float64)
    elif tag == "learner":
        layout.update(spec=model.spec.to_dict(), feature_index=model.feature_index.tolist(),
                      n_classes=model.n_classes, model=_pack(model.model, f"{prefix}.model", tensors))
        if model.imputer is not None:
            tensors[f"{prefix}.imputer"] = np.ascontiguousarray(model.imputer.means, dtype=np.float64)
        layout["has_imputer"] = model.imputer is not None
    elif tag == "stack":
        layout["level1"] = [_pack(fl, f"{prefix}.l{i}", tensors) for i, fl in enumerate(model.level1)]
        anchor = model.anchor if model.anchor is not None else np.full(len(model.level1), 1.0 / len(model.level1))
        tensors[f"{prefix}.anchor"] = np.ascontiguousarray(anchor, dtype=np.float64)
        layout.update(stacker=_pack(model.stacker, f"{prefix}.stacker", tensors), n_classes=model.n_classes,
                      use_base_features=model.use_base_features, columns=list(model.columns),
                      report=model.report)
    return layout


def _unpack(layout, prefix, tensors):
    tag = layout.get("type")
    if tag == "tree":
        return _unpack_tree(layout, prefix, tensors)
    if tag == "gbdt":
        rounds = [[_unpack_tree(lt, f"{prefix}.r{r}.c{c}", tensors) for c, lt in enumerate(trees)]
                  for r, trees in enumerate(layout["rounds"])]
        return BoostedEnsemble(rounds=rounds, base_score=tensors[f"{prefix}.base_score"],
                               config=BoostConfig.from_dict(layout["config"]), best_round=layout["best_round"],
                               n_classes=layout["n_classes"], n_features=layout["n_features"],
                               history=layout["history"])
    if tag == "forest":
        trees = [_unpack_tree(lt, f"{prefix}.t{i}", tensors) for i, lt in enumerate(layout["trees"])]
        return Forest(trees=trees, config=ForestConfig.from_dict(layout["config"]), n_classes=layout["n_classes"],
                      n_features=layout["n_features"])
    if tag == "naive_bayes":
        return GaussianNB(*(tensors[f"{prefix}.{name}"] for name in ("priors", "means", "variances")))
    if tag == "learner":
        imputer = MeanImputer(tensors[f"{prefix}.imputer"]) if layout["has_imputer"] else None
        return FittedLearner(spec=LearnerSpec.from_dict(layout["spec"]),
                             model=_unpack(layout["model"], f"{prefix}.model", tensors),
                             feature_index=np.asarray(layout["feature_index"], dtype=np.int64),
                             n_classes=layout["n_classes"], imputer=imputer)
    if tag == "stack":
        from ..pipelines.stacking import StackedModel

        level1 = [_unpack(lt, f"{prefix}.l{i}", tensors) for i, lt in enumerate(layout["level1"])]
        return StackedModel(level1=level1, stacker=_unpack(layout["stacker"], f"{prefix}.stacker", tensors),
                            n_classes=layout["n_classes"], use_base_features=layout["use_base_features"],
                            columns=tuple(layout["columns"]), anchor=tensors[f"{prefix}.anchor"],
                            report=layout.get("report", {}))
    raise ModelFormatError(f"unknown model type tag {tag!r}")


def save_model(model, path):
    """Writes `model` as a safetensors file; arrays are stored bit-exact, structure goes in the metadata header."""
    path = os.fspath(path)
    tensors = {}
    layout = _pack(model, "m", tensors)
    # a single metadata entry keeps the file bytes independent of map ordering
    header = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "model_type": layout["type"],
        "layout": layout,
    }
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    save_file(tensors, path, metadata={HEADER_KEY: json.dumps(header, sort_keys=True)})
    log(f"[Model] saved {layout['type']} model to {path}", message_type='info')


def read_header(path):
    """Returns (header dict, tensors) of a model file without rebuilding the model."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ModelFormatError(f"model file not found: {path}")
    try:
        with safe_open(path, framework="np") as f:
            metadata = f.metadata() or {}
            tensors = {k: f.get_tensor(k) for k in f.keys()}
    except Exception as e:
        raise ModelFormatError(f"cannot read model file {path}: {e}") from None
    try:
        header = json.loads(metadata[HEADER_KEY])
    except (KeyError, ValueError):
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} file") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} file")
    return header, tensors


def load_model(path, expected_type=None):
    header, tensors = read_header(path)
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path} has format version {version}, this build reads version {FORMAT_VERSION}")
    model_type = header.get("model_type")
    if expected_type is not None and model_type != expected_type:
        raise ModelFormatError(f"{path} holds a {model_type!r} model, expected {expected_type!r}")
    try:
        return _unpack(header["layout"], "m", tensors)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{path} has an inconsistent layout: {e}") from None
