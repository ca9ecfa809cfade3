"""Policy-gradient training interleaved with local search, under a size curriculum."""
from __future__ import annotations

import dataclasses
import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diffcomp as dc
from .core import TspInstance, generate_instances, tour_length
from .diffcomp import ParameterStore
from .policy import ModelConfig, config_of, init_policy, rollout, trace
from .search import LocalSearchConfig, combined_local_search

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BASELINES = ("rollout", "paper-literal", "central-self-critic")
METRICS_HEADER = "epoch,step,n,mean_raw_len,mean_improved_len,step_size"


@dataclass
class TrainConfig:
    epochs: int = 200
    steps_per_epoch: int = 1000
    batch_size: int = 128
    lr: float = 1e-3
    lr_decay: float = 0.96
    # smallest round spread whose densities stay distinguishable in float64 out to
    # epoch 200, so the mode keeps tracking the epoch instead of collapsing to uniform
    sigma_n: float = 20.0
    n_min: int = 10
    n_max: int = 50
    model: ModelConfig = field(default_factory=ModelConfig)
    search: LocalSearchConfig = field(default_factory=LocalSearchConfig)
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: Optional[float] = 1.0
    baseline: str = "rollout"
    train_search: bool = True
    fixed_size: Optional[int] = None
    first_city: str = "fixed"

    def __post_init__(self):
        for name in ("epochs", "steps_per_epoch", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not 2 <= self.n_min <= self.n_max:
            raise ValueError(f"need 2 <= n_min <= n_max, got {self.n_min}..{self.n_max}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.sigma_n <= 0:
            raise ValueError("sigma_n must be positive")

    def step_size(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch - 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(data.get("model"), dict):
            data["model"] = ModelConfig(**data["model"])
        if isinstance(data.get("search"), dict):
            data["search"] = LocalSearchConfig(**data["search"])
        return cls(**data)


# -- curriculum -------------------------------------------------------------

def curriculum_distribution(epoch: int, sigma_n: float, n_min: int = 10, n_max: int = 50) -> np.ndarray:
    """Probabilities over sizes ``n_min..n_max``: softmax of a Gaussian density centred on ``epoch``."""
    if sigma_n <= 0:
        raise ValueError(f"sigma_n must be positive, got {sigma_n}")
    if epoch < 1:
        raise ValueError(f"epoch must be >= 1, got {epoch}")
    sizes = np.arange(n_min, n_max + 1)
    g = np.exp(-0.5 * ((sizes - epoch) / sigma_n) ** 2) / (np.sqrt(2 * np.pi) * sigma_n)
    e = np.exp(g - g.max())
    return e / e.sum()


def sample_size(probs: np.ndarray, rng: np.random.Generator, n_min: int = 10) -> int:
    return n_min + int(rng.choice(len(probs), p=probs))


# -- one gradient step ------------------------------------------------------

@dataclass
class StepStats:
    n: int
    mean_raw_len: float
    mean_improved_len: float

    @property
    def mean_improvement(self) -> float:
        return self.mean_raw_len - self.mean_improved_len


def _advantages(raw, improved, greedy_costs, baseline: str, train_search: bool) -> np.ndarray:
    """Per-instance advantage, oriented so that larger is better (it is ascended)."""
    raw, improved = np.asarray(raw), np.asarray(improved)
    if baseline == "rollout":
        return improved - raw
    if baseline == "paper-literal":
        # baseline -L: ascending -(L+ + L) is the literal "move along -E[grad * (L+ - l)]"
        return -(improved + raw)
    cost = improved if train_search else raw
    centred = cost - np.asarray(greedy_costs)
    return -(centred - centred.mean())


def policy_gradient_step(params: ParameterStore, instances: Sequence[TspInstance],
                         ls_config: LocalSearchConfig, rng: np.random.Generator,
                         baseline: str = "rollout", train_search: bool = True,
                         first_city: str = "fixed"):
    """Accumulate the batch gradient into ``params`` and return ``(gradients, stats)``.

    The gradient is that of the surrogate ``mean_b(A_b * log pi(tour_b))`` and
    is meant to be ascended. With the default rollout baseline ``A_b`` is the
    (non-positive) change in length achieved by local search on the sampled
    tour, so ascent moves probability toward tours that local search can
    barely improve.
    """
    if not instances:
        raise ValueError("empty batch")
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ValueError("all instances in a batch must have the same size")
    batch = len(instances)
    rngs = rng.spawn(batch)
    logps, raw, improved, greedy_costs = [], [], [], []
    for inst, r in zip(instances, rngs):
        tour, logp = trace(params, inst, "sample", r, first_city=first_city)
        length = tour_length(inst, tour)
        if train_search:
            better = tour_length(inst, combined_local_search(inst, tour, ls_config, r))
        else:
            better = length
        logps.append(logp)
        raw.append(length)
        improved.append(better)
        if baseline == "central-self-critic":
            greedy = rollout(params, inst, "greedy", r, first_city=first_city)
            cost = greedy.raw_length
            if train_search:
                cost = tour_length(inst, combined_local_search(inst, greedy.tour, ls_config, r))
            greedy_costs.append(cost)
    adv = _advantages(raw, improved, greedy_costs, baseline, train_search)
    params.zero_grad()
    for logp, a in zip(logps, adv):
        if a != 0.0:
            dc.backward(logp, a / batch)
    stats = StepStats(n, float(np.mean(raw)), float(np.mean(improved)))
    return params.grads(), stats


# -- checkpoints ------------------------------------------------------------

class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    params: ParameterStore
    model: ModelConfig
    epoch: int
    rng_state: Optional[dict] = None
    train_config: Optional[dict] = None


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    meta = {
        "format": "tsprl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "model": dataclasses.asdict(ckpt.model),
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "train_config": ckpt.train_config,
        "tensors": {k: list(t.shape) for k, t in ckpt.params.items()},
    }
    arrays = {f"param/{k}": t.value for k, t in ckpt.params.items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    try:
        path.write_bytes(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            arrays = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    except FileNotFoundError:
        raise CheckpointError(f"{path}: no such checkpoint") from None
    except (zipfile.BadZipFile, ValueError, KeyError, OSError, EOFError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if meta.get("format") != "tsprl-checkpoint":
        raise CheckpointError(f"{path}: not a checkpoint file")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    model = ModelConfig(**meta["model"])
    params = init_policy(model, 0)
    if {k: list(v.shape) for k, v in arrays.items()} != meta["tensors"]:
        raise CheckpointError(f"{path}: tensor table does not match stored arrays")
    try:
        params.load(arrays)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return Checkpoint(params, model, meta["epoch"], meta.get("rng_state"), meta.get("train_config"))


# -- training loop ----------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def train(config: TrainConfig, output_dir, instances: Optional[Sequence[TspInstance]] = None,
          params: Optional[ParameterStore] = None) -> Checkpoint:
    """Run the full training loop, writing ``metrics.csv`` and one checkpoint per epoch.

    With ``instances`` each batch is drawn (without replacement) from that
    fixed pool instead of fresh random instances.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if instances is not None:
        sizes = {inst.n for inst in instances}
        if len(sizes) != 1:
            raise ValueError("a fixed training pool must hold one instance size")
    if params is None:
        params = init_policy(config.model, config.seed)
    elif config_of(params) != config.model:
        raise ValueError("params do not match config.model")
    if config.optimizer == "adam":
        opt = dc.Adam(params, config.lr, maximize=True)
    else:
        opt = dc.SGD(params, config.lr, maximize=True)
    master = np.random.default_rng([config.seed, 1])
    metrics_path = out / "metrics.csv"
    ckpt = None
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        for epoch in range(1, config.epochs + 1):
            if instances is not None:
                n = instances[0].n
            elif config.fixed_size is not None:
                n = config.fixed_size
            else:
                probs = curriculum_distribution(epoch, config.sigma_n, config.n_min, config.n_max)
                n = sample_size(probs, master, config.n_min)
            opt.lr = config.step_size(epoch)
            for step in range(1, config.steps_per_epoch + 1):
                rng = np.random.default_rng([config.seed, epoch, step])
                if instances is None:
                    batch = generate_instances(n, config.batch_size, int(rng.integers(2**63)))
                else:
                    k = min(config.batch_size, len(instances))
                    batch = [instances[i] for i in rng.choice(len(instances), size=k, replace=False)]
                _, stats = policy_gradient_step(params, batch, config.search, rng, config.baseline,
                                                config.train_search, config.first_city)
                dc.clip_grad_norm(params, config.clip_norm)
                opt.step()
                metrics.write(",".join([str(epoch), str(step), str(n), _fmt(stats.mean_raw_len),
                                        _fmt(stats.mean_improved_len), _fmt(opt.lr)]) + "\n")
            metrics.flush()
            log.info("epoch %d n=%d raw=%.4f improved=%.4f", epoch, n, stats.mean_raw_len,
                     stats.mean_improved_len)
            ckpt = Checkpoint(params, config.model, epoch, master.bit_generator.state, config.to_dict())
            save_checkpoint(out / f"checkpoint_e{epoch:04d}.npz", ckpt)
    return ckpt
