"""Constructive TSP policy: graph encoder, last-city MLP, attention decoder.

Row-vector convention throughout: embeddings are rows and weights multiply
from the right, so the decoder query is ``last_emb @ theta_m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import diffcomp as dc
from .core import TspInstance, tour_length
from .diffcomp import ParameterStore, Tensor


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    n_gnn: int = 3

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.n_gnn < 0:
            raise ValueError(f"n_gnn must be >= 0, got {self.n_gnn}")


@dataclass
class Trajectory:
    tour: np.ndarray
    log_prob_sum: float
    raw_length: float


def param_spec(cfg: ModelConfig) -> list[tuple]:
    h = cfg.hidden
    spec = [("input.w", (2, h))]
    for t in range(1, cfg.n_gnn + 1):
        spec += [
            (f"gnn{t}.theta", (h, h)),
            (f"gnn{t}.agg_w", (h, h)),
            (f"gnn{t}.agg_b", (h,)),
            (f"gnn{t}.gate", (1,), "zeros"),
        ]
    spec += [
        ("mlp.w1", (2, h)), ("mlp.b1", (h,)),
        ("mlp.w2", (h, 2 * h)), ("mlp.b2", (2 * h,)),
        ("mlp.w3", (2 * h, h)), ("mlp.b3", (h,)),
        ("dec.theta_g", (h, h)),
        ("dec.theta_m", (h, h)),
        ("dec.w", (h,)),
    ]
    return spec


def init_policy(cfg: ModelConfig, seed) -> ParameterStore:
    return dc.init_parameters(param_spec(cfg), seed)


def config_of(params: ParameterStore) -> ModelConfig:
    n_gnn = sum(1 for name in params if name.endswith(".theta") and name.startswith("gnn"))
    return ModelConfig(hidden=params["input.w"].shape[1], n_gnn=n_gnn)


def gate_values(params: ParameterStore) -> list[float]:
    """Squashed per-layer mixing gates, each in (0, 1)."""
    n_gnn = config_of(params).n_gnn
    return [dc.sigmoid(params[f"gnn{t}.gate"]).item() for t in range(1, n_gnn + 1)]


def _coords(instance) -> np.ndarray:
    return instance.coords if isinstance(instance, TspInstance) else np.asarray(instance, dtype=np.float64)


def encode_graph(params: ParameterStore, instance) -> Tensor:
    """Node embeddings ``(n, H)`` from the gated message-passing encoder.

    Each layer mixes a linear self-map with ``ReLU(neighbour_sum(X / (n-1)) W + b)``
    over the complete graph (self excluded).
    """
    coords = _coords(instance)
    n = coords.shape[0]
    if n < 2:
        raise ValueError("graph encoder needs at least 2 cities")
    x = Tensor(coords) @ params["input.w"]
    n_gnn = config_of(params).n_gnn
    if n_gnn == 0:
        return x
    neighbours = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    for t in range(1, n_gnn + 1):
        r = dc.sigmoid(params[f"gnn{t}.gate"])
        self_map = x @ params[f"gnn{t}.theta"]
        agg = dc.relu((Tensor(neighbours) @ x) @ params[f"gnn{t}.agg_w"] + params[f"gnn{t}.agg_b"])
        x = r * self_map + (1.0 - r) * agg
    return x


def encode_last_city(params: ParameterStore, coords) -> Tensor:
    """MLP ``2 -> H -> 2H -> H``; accepts one point or a stack of points."""
    h = dc.relu(Tensor(np.asarray(coords, dtype=np.float64)) @ params["mlp.w1"] + params["mlp.b1"])
    h = dc.relu(h @ params["mlp.w2"] + params["mlp.b2"])
    return h @ params["mlp.w3"] + params["mlp.b3"]


def scores(params: ParameterStore, node_embs: Tensor, last_emb: Tensor) -> Tensor:
    keys = node_embs @ params["dec.theta_g"]
    query = last_emb @ params["dec.theta_m"]
    return dc.tanh(keys + query) @ params["dec.w"]


def action_distribution(params: ParameterStore, node_embs: Tensor, last_emb: Tensor, visited) -> Tensor:
    visited = np.asarray(visited, dtype=bool)
    if visited.all():
        raise ValueError("all cities are visited")
    return dc.masked_softmax(scores(params, node_embs, last_emb), visited)


class _Decoder:
    """Per-instance decoding state; keys and per-city queries computed once.

    The MLP is applied to every city up front and the last city's row is
    selected at each step, which equals running the MLP on that city alone.
    """

    def __init__(self, params: ParameterStore, instance):
        coords = _coords(instance)
        self.n = coords.shape[0]
        self.params = params
        embs = encode_graph(params, coords)
        self.keys = embs @ params["dec.theta_g"]
        self.queries = encode_last_city(params, coords) @ params["dec.theta_m"]

    def log_probs(self, last: int, visited: np.ndarray) -> Tensor:
        u = dc.tanh(self.keys + self.queries[last]) @ self.params["dec.w"]
        return dc.masked_log_softmax(u, visited)


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if j >= len(p) or p[j] == 0.0:
        j = int(np.flatnonzero(p)[-1])
    return j


def trace(params: ParameterStore, instance, mode: str = "greedy",
          rng: Optional[np.random.Generator] = None, actions: Optional[Sequence[int]] = None,
          first_city: str = "fixed"):
    """Decode a tour and return ``(tour, log_prob_sum_tensor)``.

    With ``actions`` the given order is replayed instead of decoded. The
    first city carries no log-probability term.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown decode mode {mode!r}")
    dec = _Decoder(params, instance)
    n = dec.n
    if actions is not None:
        actions = [int(a) for a in actions]
        if sorted(actions) != list(range(n)):
            raise ValueError("replayed actions must be a permutation")
        first = actions[0]
    elif first_city == "random":
        first = int(rng.integers(n))
    elif first_city == "fixed":
        first = 0
    else:
        raise ValueError(f"unknown first_city {first_city!r}")
    if mode == "sample" and rng is None and actions is None:
        raise ValueError("sampling needs an rng")
    tour = [first]
    visited = np.zeros(n, dtype=bool)
    visited[first] = True
    terms = []
    for t in range(1, n):
        logp = dec.log_probs(tour[-1], visited)
        if actions is not None:
            a = actions[t]
        elif mode == "greedy":
            a = int(np.argmax(np.where(visited, -np.inf, logp.value)))
        else:
            a = _sample(np.exp(logp.value) * ~visited, rng)
        terms.append(logp[a])
        tour.append(a)
        visited[a] = True
    total = terms[0] if len(terms) == 1 else _sum_terms(terms)
    return np.array(tour, dtype=np.int64), total


def _sum_terms(terms: list[Tensor]) -> Tensor:
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    return out


def rollout(params: ParameterStore, instance: TspInstance, mode: str = "greedy",
            rng: Optional[np.random.Generator] = None, first_city: str = "fixed") -> Trajectory:
    if instance.n < 2:
        raise ValueError("rollout needs at least 2 cities")
    with dc.no_grad():
        tour, logp = trace(params, instance, mode, rng, first_city=first_city)
    return Trajectory(tour, logp.item(), tour_length(instance, tour))


def log_prob_of(params: ParameterStore, instance, actions: Sequence[int]) -> Tensor:
    """Differentiable ``sum_t log pi(a_t | s_t)`` of a fixed action sequence."""
    _, logp = trace(params, instance, actions=actions)
    return logp
