"""Grounded instruction following in procedural maze worlds.

Generates paired (world, instruction, action-sequence) instances, trains a
sequence-to-sequence navigation model with channel attention over grid
percepts, and benchmarks learning efficiency on instance streams.
"""

__version__ = "0.1.0"

from .worldsim import (  # noqa: F401
    Action,
    Direction,
    Outcome,
    Pose,
    WorldConfig,
    WorldMap,
    execute,
    generate_world,
    shortest_path,
    step,
)
from .langgen import (  # noqa: F401
    DEFAULT_MIX,
    Instance,
    TaskCategory,
    generate_dataset,
    generate_instance,
)
