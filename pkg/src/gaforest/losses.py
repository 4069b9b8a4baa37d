"""Per-instance loss terms recorded on a :class:`~gaforest.tensor.Graph`.

Adversarial terms work on clamped probabilities so every log term is bounded
by ``-log(1e-7)``; supervised terms use exact log-sigmoid / log-softmax.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .tensor import Graph, Tensor

PROB_CLAMP = 1e-7


def clamped_probability(graph: Graph, logits: Tensor) -> Tensor:
    return graph.clip(graph.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP)


def real_terms(graph: Graph, logits: Tensor) -> Tensor:
    """``-log D(x)`` per instance, shape ``(B,)``."""
    p = clamped_probability(graph, logits)
    return graph.neg(graph.sum(graph.log(p), axis=1))


def fake_terms(graph: Graph, logits: Tensor) -> Tensor:
    """``-log(1 - D(G(z)))`` per instance."""
    p = clamped_probability(graph, logits)
    return graph.neg(graph.sum(graph.log(graph.sub(1.0, p)), axis=1))


def adversarial_terms(graph: Graph, logits: Tensor, is_real) -> Tensor:
    """Real or fake term for each row, chosen by the 0/1 vector ``is_real``."""
    real = np.asarray(is_real, dtype=np.float64).reshape(-1, 1)
    p = clamped_probability(graph, logits)
    log_p = graph.log(p)
    log_q = graph.log(graph.sub(1.0, p))
    picked = graph.add(graph.mul(log_p, real), graph.mul(log_q, 1.0 - real))
    return graph.neg(graph.sum(picked, axis=1))


def cross_entropy_terms(graph: Graph, logits: Tensor, labels) -> Tensor:
    """Log loss per instance: binary with one logit column, softmax otherwise."""
    labels = np.asarray(labels)
    batch, width = logits.shape
    if labels.shape[0] != batch:
        raise ContractError(f"{labels.shape[0]} labels for a batch of {batch}")
    if width == 1:
        y = labels.astype(np.float64).reshape(-1, 1)
        pos = graph.log_sigmoid(logits)
        neg = graph.log_sigmoid(graph.neg(logits))
        picked = graph.add(graph.mul(pos, y), graph.mul(neg, 1.0 - y))
    else:
        onehot = np.zeros((batch, width))
        onehot[np.arange(batch), labels.astype(np.intp)] = 1.0
        picked = graph.mul(graph.log_softmax(logits), onehot)
    return graph.neg(graph.sum(picked, axis=1))


def instance_terms(graph: Graph, logits: Tensor, targets, kind: str) -> Tensor:
    if kind == "adversarial":
        return adversarial_terms(graph, logits, targets)
    if kind == "cross_entropy":
        return cross_entropy_terms(graph, logits, targets)
    raise ContractError(f"unknown loss kind {kind!r}")
