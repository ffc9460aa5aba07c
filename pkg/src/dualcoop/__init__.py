"""Cooperative kinematics for two serial arms holding a common object.

Modules:

* ``geom``  rotations, quaternions, poses and screw transforms
* ``chain`` DH chains, forward kinematics, Jacobians and robot configs
* ``coop``  linking matrices, cooperative frames and the identity checks
* ``ik``    pseudo-inverse and nullspace-priority solvers
* ``sim``   the two-point example and two-arm alignment runs
* ``cli``   command-line front end
"""

from .chain import DualArmSystem, SerialChain, load_bundled, load_system, load_system_file
from .coop import LinkKind, cooperative_frames, identity_suite, linking
from .geom import Pose
from .ik import RankDeficiencyError, SolveOptions, pinv, solve_priority
from .sim import Method, PointSystemConfig, SimConfig, Task, run_alignment, run_point_example

__version__ = "0.1.0"

__all__ = [
    "DualArmSystem",
    "LinkKind",
    "Method",
    "PointSystemConfig",
    "Pose",
    "RankDeficiencyError",
    "SerialChain",
    "SimConfig",
    "SolveOptions",
    "Task",
    "cooperative_frames",
    "identity_suite",
    "linking",
    "load_bundled",
    "load_system",
    "load_system_file",
    "pinv",
    "run_alignment",
    "run_point_example",
    "solve_priority",
]
