"""fairwaysim: 3-DOF vessel simulation with radar, planning, and RL hooks."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    BodyVelocity,
    ControlCommand,
    CurrentSpec,
    Pose,
    SimState,
    Thruster,
    VesselParams,
    WindForce,
    load_model,
    step,
)
