"""Deep-RL TSP construction with interleaved local search, plus classical baselines."""
from .core import TspInstance, generate_instance, read_instance, tour_length, validate_tour, write_instance
from .exact import held_karp_exact
from .policy import ModelConfig, Trajectory, init_policy, rollout
from .search import LocalSearchConfig, combined_local_search, insertion_tour, two_opt_sweep
from .trainer import TrainConfig, curriculum_distribution, load_checkpoint, save_checkpoint, train

__all__ = [
    "LocalSearchConfig", "ModelConfig", "TrainConfig", "Trajectory", "TspInstance",
    "combined_local_search", "curriculum_distribution", "generate_instance", "held_karp_exact",
    "init_policy", "insertion_tour", "load_checkpoint", "read_instance", "rollout",
    "save_checkpoint", "tour_length", "train", "two_opt_sweep", "validate_tour", "write_instance",
]
