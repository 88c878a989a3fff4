"""Free-space biased sampling with an augmented kd-tree."""

__version__ = "0.1.0"

from .baseline import BaselineSampler, BudgetExhausted
from .env import AABB, Environment, Sphere, load_environment, save_environment
from .geometry import HyperRect
from .sampler import Node, SampleRecord, SamplerTree, new_tree

__all__ = [
    "AABB",
    "BaselineSampler",
    "BudgetExhausted",
    "Environment",
    "HyperRect",
    "Node",
    "SampleRecord",
    "SamplerTree",
    "Sphere",
    "load_environment",
    "new_tree",
    "save_environment",
]
