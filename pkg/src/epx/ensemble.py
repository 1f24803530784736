"""Final ensemble: one forest per phalanx, probabilities averaged."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ._seeding import mix, pmap
from .dataset import Dataset, VariableMeta
from .forest import Forest, ForestConfig, ForestError, canonical, fit, predict_proba

FORMAT_NAME = "epx-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EpxModel:
    phalanxes: tuple[tuple[int, ...], ...]
    forests: tuple[Forest, ...]
    variables: tuple[VariableMeta, ...]
    n_obs: int
    prevalence: float
    config: ForestConfig
    formation: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def p(self) -> int:
        return len(self.phalanxes)

    def phalanx_names(self) -> list[list[str]]:
        return [[self.variables[i].name for i in g] for g in self.phalanxes]


def _check_phalanxes(phalanxes, n_vars: int) -> tuple[tuple[int, ...], ...]:
    groups = tuple(canonical(g) for g in phalanxes)
    if not groups:
        raise ForestError("at least one phalanx is required")
    seen: set[int] = set()
    for g in groups:
        if not g:
            raise ForestError("empty phalanx")
        if g[0] < 0 or g[-1] >= n_vars:
            raise ForestError(f"phalanx {list(g)} references columns outside 0..{n_vars - 1}")
        if seen.intersection(g):
            raise ForestError(f"phalanxes overlap on {sorted(seen.intersection(g))}")
        seen.update(g)
    return groups


def fit_epx(
    dataset: Dataset,
    phalanxes: Sequence[Sequence[int]],
    config: ForestConfig = ForestConfig(),
    threads: int = 1,
    formation: dict[str, Any] | None = None,
) -> EpxModel:
    """One forest per phalanx; phalanx ``k`` uses seed ``mix(config.seed, k)``."""
    groups = _check_phalanxes(phalanxes, dataset.n_vars)
    configs = [config.with_seed(mix(config.seed, k)) for k in range(len(groups))]
    if threads > 1 and len(groups) > 1:
        forests = pmap(lambda k: fit(dataset, groups[k], configs[k]), range(len(groups)), threads)
    else:
        forests = [fit(dataset, g, c, threads) for g, c in zip(groups, configs)]
    return EpxModel(
        phalanxes=groups,
        forests=tuple(forests),
        variables=dataset.columns,
        n_obs=dataset.n_obs,
        prevalence=dataset.n_active / dataset.n_obs,
        config=config,
        formation=dict(formation or {}),
    )


def member_probabilities(model: EpxModel, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """``(p, n_rows)`` matrix of per-phalanx probabilities."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.variables):
        raise ForestError(f"expected rows with {len(model.variables)} columns, got shape {X.shape}")
    return np.stack(pmap(lambda f: predict_proba(f, X), model.forests, threads))


def predict_epx(model: EpxModel, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """Unweighted mean of the member forests' probabilities."""
    return member_probabilities(model, X, threads).mean(axis=0)


# ---------------------------------------------------------------------------
# Persistence

_ARRAYS = ("feature", "threshold", "left", "right", "count0", "count1", "offsets")


def _forest_doc(forest: Forest, names: list[str]) -> dict[str, Any]:
    return {
        "variables": [names[i] for i in forest.variable_subset],
        "prevalence": forest.prevalence,
        "n_trees": forest.n_trees,
        **{a: getattr(forest, a).tolist() for a in _ARRAYS},
    }


def model_to_dict(model: EpxModel) -> dict[str, Any]:
    names = [v.name for v in model.variables]
    return {
        "format": FORMAT_NAME,
        "format_version": model.format_version,
        "variables": [{"name": v.name, "kind": v.kind} for v in model.variables],
        "phalanxes": model.phalanx_names(),
        "train": {"n_obs": model.n_obs, "prevalence": model.prevalence},
        "forest_config": asdict(model.config),
        "formation": model.formation,
        "forests": [_forest_doc(f, names) for f in model.forests],
    }


def dumps_model(model: EpxModel) -> str:
    return json.dumps(model_to_dict(model), separators=(",", ":")) + "\n"


def save_model(model: EpxModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def _arr(doc, key, dtype):
    try:
        return np.asarray(doc[key], dtype=dtype)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"forest field {key!r} is missing or malformed") from exc


def model_from_dict(doc: dict[str, Any]) -> EpxModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not an EPX model file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r}; this build reads version {FORMAT_VERSION}")
    try:
        variables = tuple(VariableMeta(v["name"], v["kind"], j) for j, v in enumerate(doc["variables"]))
        index = {v.name: j for j, v in enumerate(variables)}
        phalanxes = tuple(canonical(index[n] for n in group) for group in doc["phalanxes"])
        config = ForestConfig(**doc["forest_config"])
        forests = []
        for fd in doc["forests"]:
            subset = canonical(index[n] for n in fd["variables"])
            forest = Forest(
                variable_subset=subset,
                feature=_arr(fd, "feature", np.int64),
                threshold=_arr(fd, "threshold", np.float64),
                left=_arr(fd, "left", np.int64),
                right=_arr(fd, "right", np.int64),
                count0=_arr(fd, "count0", np.int64),
                count1=_arr(fd, "count1", np.int64),
                offsets=_arr(fd, "offsets", np.int64),
                prevalence=float(fd["prevalence"]),
            )
            if forest.n_trees != fd["n_trees"] or forest.offsets[-1] != forest.feature.size:
                raise ModelFormatError("forest tree table is inconsistent")
            if not forest.split_variables() <= set(subset):
                raise ModelFormatError("forest splits on variables outside its phalanx")
            forests.append(forest)
        model = EpxModel(
            phalanxes=phalanxes,
            forests=tuple(forests),
            variables=variables,
            n_obs=int(doc["train"]["n_obs"]),
            prevalence=float(doc["train"]["prevalence"]),
            config=config,
            formation=dict(doc.get("formation") or {}),
            format_version=version,
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from exc
    if len(model.forests) != len(model.phalanxes) or any(
        f.variable_subset != g for f, g in zip(model.forests, model.phalanxes)
    ):
        raise ModelFormatError("forests do not match phalanxes")
    return model


def load_model(path: str | Path) -> EpxModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: cannot parse model file ({exc.msg} at line {exc.lineno})") from exc
    return model_from_dict(doc)
