"""lgplan: tabletop semantic rearrangement planning.

Turns structured goal specifications (rows, circles, stacks, relative
placements) into spatial pose distributions and searches for executable
pick-and-place plans with Monte Carlo tree search.
"""

__version__ = "0.1.0"

from lgplan.geometry import Footprint, Pose, Workspace  # noqa: F401
from lgplan.scene import Scene, SceneObject  # noqa: F401
