"""JSON market files.

A market file is a UTF-8 JSON object::

    {
      "horizon": 2,
      "assets": 1,
      "models": [{"name": "star", "initial": [0.0]}, ...],
      "root": {"children": [
          {"prob": 0.5, "increments": {"star": [-0.5], ...}, "children": [...]},
          ...
      ]}
    }

Every non-root node carries its conditional probability and one increment
vector per model. Numbers are written with Python's shortest round-trip
representation, so ``load_market(save_market(f))`` reproduces ``f`` bit for bit.
"""

import json
from collections.abc import Mapping

import numpy as np

from .errors import SchemaError
from .market import ModelFamily, make_model
from .space import build_tree


def _require(obj, key, where):
    if not isinstance(obj, Mapping) or key not in obj:
        raise SchemaError(f"{where}: missing key {key!r}")
    return obj[key]


def _vector(value, d, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool) and d == 1:
        value = [value]
    if not isinstance(value, list) or len(value) != d:
        raise SchemaError(f"{where}: expected a list of {d} numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: non-numeric entry in {value!r}") from exc


def family_from_dict(data):
    """Validate a decoded market object and build the :class:`ModelFamily`."""
    if not isinstance(data, Mapping):
        raise SchemaError("top level must be a JSON object")
    horizon = _require(data, "horizon", "market")
    assets = _require(data, "assets", "market")
    d = len(assets) if isinstance(assets, list) else assets
    if not isinstance(horizon, int) or horizon < 1:
        raise SchemaError("market: 'horizon' must be a positive integer")
    if not isinstance(d, int) or d < 1:
        raise SchemaError("market: 'assets' must be a positive integer or a list of names")
    models = _require(data, "models", "market")
    if not isinstance(models, list) or not models:
        raise SchemaError("market: 'models' must be a non-empty list")
    names = []
    initial = {}
    for k, m in enumerate(models):
        name = _require(m, "name", f"models[{k}]")
        if not isinstance(name, str) or name in initial:
            raise SchemaError(f"models[{k}]: names must be distinct strings")
        names.append(name)
        initial[name] = _vector(_require(m, "initial", f"models[{k}]"), d, f"models[{k}].initial")

    incs = {name: [[] for _ in range(horizon)] for name in names}

    def strip(node, depth, path):
        """Copy of the probability skeleton; collects increments per depth."""
        out = {}
        if depth > 0:
            out["prob"] = _require(node, "prob", path)
            inc = _require(node, "increments", path)
            if not isinstance(inc, Mapping):
                raise SchemaError(f"{path}: 'increments' must be an object keyed by model name")
            for name in names:
                if name not in inc:
                    raise SchemaError(f"{path}: missing increment for model {name!r}")
                incs[name][depth - 1].append(_vector(inc[name], d, f"{path}.increments.{name}"))
            extra = set(inc) - set(names)
            if extra:
                raise SchemaError(f"{path}: increments for unknown models {sorted(extra)}")
        kids = node.get("children") or []
        if not isinstance(kids, list):
            raise SchemaError(f"{path}: 'children' must be a list")
        if depth > horizon or (depth == horizon and kids) or (depth < horizon and not kids):
            raise SchemaError(f"{path}: leaves must sit at depth {horizon}")
        if kids:
            out["children"] = [strip(c, depth + 1, f"{path}/{j}") for j, c in enumerate(kids)]
        return out

    root = _require(data, "root", "market")
    if not isinstance(root, Mapping):
        raise SchemaError("market: 'root' must be an object")
    tree = build_tree(strip(root, 0, "root"))
    built = [make_model(name, initial[name], [np.array(v) for v in incs[name]]) for name in names]
    return ModelFamily(tree, tuple(built))


def family_to_dict(family):
    tree = family.tree
    T = tree.horizon

    def rec(t, i):
        node = {}
        if t > 0:
            node["prob"] = float(tree.cond_prob[t][i])
            node["increments"] = {m.name: [float(v) for v in m.increments[t][i]] for m in family}
        if t < T:
            node["children"] = [rec(t + 1, j) for j in tree.children(t, i)]
        return node

    return {
        "horizon": T,
        "assets": family.d,
        "models": [{"name": m.name, "initial": [float(v) for v in m.initial]} for m in family],
        "root": rec(0, 0),
    }


def load_market(path):
    """Read and validate a market file. Raises :class:`SchemaError` or ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return family_from_dict(data)


def save_market(family, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(family_to_dict(family), fh, indent=1)
        fh.write("\n")
