"""Declarative model specs, instantiated networks and head Jacobians.

A spec is an input width plus a layer list ending in exactly one head::

    {"name": "xor_tree", "input_dim": 3,
     "layers": [{"type": "affine", "out": 3},
                {"type": "forest_head", "trees": 1, "depth": 2}]}

Layer types: ``affine`` (``out``), ``relu``, ``sigmoid``, ``fc_head``
(``out``) and ``forest_head`` (``trees``, ``depth``, ``combination``,
``alpha``, ``outputs``).  All parameters are drawn from N(0, ``init_std``).
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ShapeError, SpecError
from .forest import SoftForest
from .losses import instance_terms
from .tensor import Graph, Tensor

HEADS = ("fc_head", "forest_head")
ROOT_EPS = 1e-12
PRESETS = ("xor_fc", "xor_tree", "clf_fc", "clf_forest", "gan_fc", "gan_forest_shallow",
           "gan_forest_deep", "gan_generator", "dcgan_fc_head", "gaf_shallow_head", "gaf_deep_head")


@dataclass
class ModelSpec:
    input_dim: int
    layers: list[dict]
    init_std: float = 0.02
    name: str = ""

    def __post_init__(self):
        self.layers = [dict(layer) for layer in self.layers]
        self.validate()

    def validate(self) -> None:
        if self.input_dim < 1:
            raise SpecError("input_dim must be positive")
        if not self.layers:
            raise SpecError("a model needs at least a head")
        heads = [i for i, layer in enumerate(self.layers) if layer.get("type") in HEADS]
        if heads != [len(self.layers) - 1]:
            raise SpecError("exactly one head is required and it must be the final layer")
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            kind = layer.get("type")
            if kind in ("affine", "fc_head"):
                if "in" in layer and layer["in"] != width:
                    raise SpecError(f"layer {i} ({kind}) expects width {layer['in']} but receives {width}")
                if int(layer.get("out", 0)) < 1:
                    raise SpecError(f"layer {i} ({kind}) needs a positive 'out'")
                width = int(layer["out"])
            elif kind == "forest_head":
                trees, depth = int(layer.get("trees", 0)), int(layer.get("depth", 0))
                if trees < 1 or depth < 1:
                    raise SpecError(f"layer {i}: forest_head needs trees >= 1 and depth >= 1")
                need = trees * (2 ** depth - 1)
                if need != width:
                    raise SpecError(f"layer {i}: forest_head with {trees} trees of depth {depth} "
                                    f"needs input width {need}, got {width}")
                if layer.get("combination", "average") not in ("average", "product"):
                    raise SpecError(f"layer {i}: unknown combination {layer.get('combination')!r}")
                if layer.get("combination") == "product" and int(layer.get("outputs", 1)) != 1:
                    raise SpecError(f"layer {i}: product combination needs outputs == 1")
                width = int(layer.get("outputs", 1))
            elif kind not in ("relu", "sigmoid"):
                raise SpecError(f"layer {i}: unknown layer type {kind!r}")

    @property
    def output_dim(self) -> int:
        head = self.layers[-1]
        return int(head["out"]) if head["type"] == "fc_head" else int(head.get("outputs", 1))

    @property
    def head(self) -> dict:
        return self.layers[-1]

    def layer_widths(self) -> list[int]:
        """Input width seen by each layer."""
        widths, width = [], self.input_dim
        for layer in self.layers:
            widths.append(width)
            if layer["type"] in ("affine", "fc_head"):
                width = int(layer["out"])
            elif layer["type"] == "forest_head":
                width = int(layer.get("outputs", 1))
        return widths

    def param_count(self) -> int:
        return self.body_param_count() + self.head_param_count()

    def body_param_count(self) -> int:
        widths = self.layer_widths()
        return sum(widths[i] * int(layer["out"]) + int(layer["out"])
                   for i, layer in enumerate(self.layers[:-1]) if layer["type"] == "affine")

    def head_param_count(self) -> int:
        head, width = self.head, self.layer_widths()[-1]
        if head["type"] == "fc_head":
            return width * int(head["out"]) + int(head["out"])
        trees, depth = int(head["trees"]), int(head["depth"])
        return trees * (2 ** depth - 1) + trees * 2 ** depth * int(head.get("outputs", 1))

    def to_json(self) -> dict:
        return {"name": self.name, "input_dim": self.input_dim, "init_std": self.init_std,
                "layers": copy.deepcopy(self.layers)}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        return cls(int(obj["input_dim"]), obj["layers"], float(obj.get("init_std", 0.02)), obj.get("name", ""))


def load_preset(name: str) -> ModelSpec:
    """Load one of the bundled model presets (see ``PRESETS``)."""
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("gaforest").joinpath(f"presets/{name}.json").read_text()
    return ModelSpec.from_json(json.loads(text))


def xor_spec(model: str, dim: int, depth: int | None = None) -> ModelSpec:
    """XOR model for ``dim`` inputs; ``dim == 3`` gives the bundled presets.

    ``fc`` is affine ``dim -> dim``, relu, fc_head.  ``tree`` is one affine
    layer feeding a single tree of depth ``depth`` (default ``dim - 1``), one
    activation per split node.
    """
    if dim < 2:
        raise SpecError("xor needs dim >= 2")
    if model not in ("fc", "tree"):
        raise SpecError(f"xor model must be 'fc' or 'tree', got {model!r}")
    base = load_preset(f"xor_{model}").to_json()
    base["input_dim"], base["name"] = dim, f"xor_{model}_{dim}"
    if model == "fc":
        base["layers"][0]["out"] = dim
    else:
        depth = dim - 1 if depth is None else int(depth)
        base["layers"][0]["out"] = 2 ** depth - 1
        base["layers"][1]["depth"] = depth
    if dim == 3 and (model == "fc" or depth == 2):
        return load_preset(f"xor_{model}")
    return ModelSpec.from_json(base)


class Network:
    """A :class:`ModelSpec` with concrete parameters.

    ``parameters()`` is ordered layer by layer (weight before bias, split
    biases before leaves), and that order is what checkpoints store.
    """

    def __init__(self, spec: ModelSpec, seed: int, params: list[Tensor] | None = None):
        self.spec = spec
        self.seed = int(seed)
        self._layers: list[tuple[str, dict, list[Tensor]]] = []
        rng = np.random.default_rng(self.seed)
        supplied = iter(params) if params is not None else None
        widths = spec.layer_widths()
        for i, layer in enumerate(spec.layers):
            kind = layer["type"]
            shapes = []
            if kind in ("affine", "fc_head"):
                shapes = [(widths[i], int(layer["out"])), (int(layer["out"]),)]
            elif kind == "forest_head":
                trees, depth = int(layer["trees"]), int(layer["depth"])
                shapes = [(trees, 2 ** depth - 1), (trees, 2 ** depth, int(layer.get("outputs", 1)))]
            tensors = []
            for j, shape in enumerate(shapes):
                if supplied is None:
                    t = Tensor(rng.normal(0.0, spec.init_std, size=shape))
                else:
                    t = next(supplied, None)
                    if t is None or t.shape != shape:
                        raise ShapeError(f"layer {i} parameter {j}: expected shape {list(shape)}")
                t.name = f"{i}.{kind}.{j}"
                tensors.append(t)
            self._layers.append((kind, layer, tensors))
        if supplied is not None and next(supplied, None) is not None:
            raise ShapeError("more parameters supplied than the spec needs")
        head_kind, head_cfg, head_params = self._layers[-1]
        self.forest = None
        if head_kind == "forest_head":
            self.forest = SoftForest(int(head_cfg["trees"]), int(head_cfg["depth"]), head_params[0],
                                     head_params[1], head_cfg.get("combination", "average"),
                                     float(head_cfg.get("alpha", 1.0)))

    def parameters(self) -> list[Tensor]:
        return [t for _, _, tensors in self._layers for t in tensors]

    def head_parameters(self) -> list[Tensor]:
        return list(self._layers[-1][2])

    def body_parameters(self) -> list[Tensor]:
        return [t for _, _, tensors in self._layers[:-1] for t in tensors]

    def param_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()

    # -- forward --------------------------------------------------------

    def _layer(self, graph: Graph, x: Tensor, kind: str, tensors: list[Tensor], trainable: bool) -> Tensor:
        use = graph.param if trainable else graph.constant
        if kind in ("affine", "fc_head"):
            return graph.add(graph.matmul(x, use(tensors[0])), use(tensors[1]))
        if kind == "relu":
            return graph.relu(x)
        if kind == "sigmoid":
            return graph.sigmoid(x)
        f = self.forest
        return graph.soft_forest(x, use(tensors[0]), use(tensors[1]), f.alpha, f.combination)

    def body(self, graph: Graph, batch, trainable: bool = True) -> Tensor:
        x = graph.constant(batch) if not isinstance(batch, Tensor) else batch
        for kind, _, tensors in self._layers[:-1]:
            x = self._layer(graph, x, kind, tensors, trainable)
        return x

    def head(self, graph: Graph, features, trainable: bool = True) -> Tensor:
        kind, _, tensors = self._layers[-1]
        return self._layer(graph, features, kind, tensors, trainable)

    def apply(self, graph: Graph, batch, trainable: bool = True) -> Tensor:
        """Record the whole network on ``graph``; ``trainable=False`` treats parameters as constants."""
        x = batch if isinstance(batch, Tensor) else graph.constant(batch)
        if x.data.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"batch must have shape [B, {self.spec.input_dim}], got {list(x.shape)}")
        return self.head(graph, self.body(graph, x, trainable), trainable)

    def forward(self, batch) -> np.ndarray:
        """Outputs for a ``(B, input_dim)`` batch; no gradients are kept."""
        return self.apply(Graph(), np.asarray(batch, dtype=np.float64), trainable=False).data

    def features(self, batch) -> np.ndarray:
        return self.body(Graph(), np.asarray(batch, dtype=np.float64), trainable=False).data

    # -- conditioning ----------------------------------------------------

    def with_head_jacobian(self, batch, targets, loss: str = "adversarial",
                           full: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Outputs and the Jacobian of per-instance root losses.

        Row ``i`` is ``d sqrt(L_i + eps) / d theta`` where ``theta`` is the
        head parameters (or every parameter when ``full``), from one
        backward pass per instance.  ``loss`` is ``"adversarial"`` (targets
        are 1 for real rows, 0 for fake) or ``"cross_entropy"``.
        """
        batch = np.asarray(batch, dtype=np.float64)
        targets = np.asarray(targets)
        wrt = self.parameters() if full else self.head_parameters()
        feats = batch if full else self.features(batch)
        rows = np.empty((batch.shape[0], sum(t.size for t in wrt)))
        outputs = np.empty((batch.shape[0], self.spec.output_dim))
        for i in range(batch.shape[0]):
            graph = Graph()
            x = graph.constant(feats[i:i + 1])
            out = self.apply(graph, x) if full else self.head(graph, x)
            li = graph.sum(instance_terms(graph, out, targets[i:i + 1], loss))
            grads = graph.gradients(li, wrt)
            scale = 0.5 / math.sqrt(max(li.item(), 0.0) + ROOT_EPS)
            rows[i] = np.concatenate([g.reshape(-1) for g in grads]) * scale
            outputs[i] = out.data[0]
        return outputs, rows

    # -- persistence ------------------------------------------------------

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "seed": self.seed,
                "parameters": [t.to_json() for t in self.parameters()]}

    @classmethod
    def from_json(cls, obj: dict) -> "Network":
        spec = ModelSpec.from_json(obj["spec"])
        return cls(spec, int(obj["seed"]), [Tensor.from_json(p) for p in obj["parameters"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build(spec: ModelSpec, seed: int) -> Network:
    """Instantiate ``spec`` with parameters drawn from ``seed``."""
    spec.validate()
    return Network(spec, seed)


def head_param_breakdown(spec: ModelSpec) -> dict:
    """Parameter counts of the head split into weight/bias or split-bias/leaf groups."""
    head, width = spec.head, spec.layer_widths()[-1]
    if head["type"] == "fc_head":
        return {"weights": width * int(head["out"]), "biases": int(head["out"])}
    trees, depth = int(head["trees"]), int(head["depth"])
    return {"split_biases": trees * (2 ** depth - 1),
            "leaves": trees * 2 ** depth * int(head.get("outputs", 1))}


__all__ = ["ModelSpec", "Network", "build", "load_preset", "head_param_breakdown", "xor_spec", "PRESETS"]
