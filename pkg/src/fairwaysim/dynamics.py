"""3-DOF surface vessel dynamics in the horizontal plane.

State splits into an earth-fixed pose (x, y, psi) and a body-fixed velocity
(u, v, r) expressed relative to the ambient water. An irrotational current
couples the two frames: the current's body-frame components depend on heading,
so pose kinematics and relative-velocity dynamics have to be integrated
together rather than chained.

All quantities are SI (meters, radians, seconds, newtons).
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .angles import wrap_angle

logger = logging.getLogger(__name__)

_STATE_LABELS = ("x", "y", "psi", "u_r", "v_r", "r_r")


class ModelFormatError(ValueError):
    """Vessel model document is missing keys, has wrong shapes, or won't parse."""


class MassMatrixError(ValueError):
    """Mass matrix is not symmetric positive definite."""


class ThrusterConfigError(ValueError):
    """Thruster entry violates its bounds (force, placement, angle limits)."""


class IntegrationDivergedError(RuntimeError):
    """A state component left the finite range during integration."""


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Earth-fixed position and heading. psi is kept wrapped to (-pi, pi]."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "psi", float(wrap_angle(self.psi)))

    def as_array(self):
        return np.array([self.x, self.y, self.psi])


@dataclass(frozen=True)
class BodyVelocity:
    """Body-frame velocity triple: surge u, sway v, yaw rate r."""

    u: float
    v: float
    r: float

    def as_array(self):
        return np.array([self.u, self.v, self.r])


@dataclass(frozen=True)
class CurrentSpec:
    """Uniform irrotational current: speed (m/s) and earth-frame heading."""

    speed: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        if not (self.speed >= 0.0 and math.isfinite(self.speed)):
            raise ValueError(f"current speed must be finite and >= 0, got {self.speed}")
        object.__setattr__(self, "heading", float(wrap_angle(self.heading)))


@dataclass(frozen=True)
class WindForce:
    """Generalized wind load in the body frame: (X, Y, N)."""

    tau_x: float = 0.0
    tau_y: float = 0.0
    tau_n: float = 0.0

    def as_array(self):
        return np.array([self.tau_x, self.tau_y, self.tau_n])


ZERO_WIND = WindForce()


@dataclass(frozen=True)
class Thruster:
    """Azimuth thruster: position in the body frame plus actuation limits.

    angle_min == angle_max marks a fixed (non-steerable) unit; the angle
    command is then ignored and the fixed angle always applies.
    """

    dx: float
    dy: float
    max_force: float
    angle_min: float = 0.0
    angle_max: float = 0.0

    def __post_init__(self):
        if not (self.max_force > 0.0 and math.isfinite(self.max_force)):
            raise ThrusterConfigError(f"max_force must be positive, got {self.max_force}")
        if self.angle_min > self.angle_max:
            raise ThrusterConfigError(
                f"angle_min {self.angle_min} exceeds angle_max {self.angle_max}"
            )
        if abs(self.angle_min) > math.pi or abs(self.angle_max) > math.pi:
            raise ThrusterConfigError("thruster angle limits must lie within [-pi, pi]")

    @property
    def steerable(self):
        return self.angle_max > self.angle_min

    def angle_from_normalized(self, angle_norm):
        """Map a normalized angle command in [0, 1] to a physical angle.

        Two affine half-maps joined at 0.5: 0 -> angle_min, 0.5 -> 0 rad,
        1 -> angle_max, so asymmetric limits keep a neutral midpoint.
        Out-of-range commands are clamped first.
        """
        if not self.steerable:
            return self.angle_min
        a = min(1.0, max(0.0, angle_norm))
        if a >= 0.5:
            return (a - 0.5) * 2.0 * self.angle_max
        return (0.5 - a) * 2.0 * self.angle_min

    def normalized_from_angle(self, angle):
        """Inverse of angle_from_normalized; saturates outside the limits."""
        if not self.steerable:
            return 0.5
        theta = min(self.angle_max, max(self.angle_min, angle))
        if theta >= 0.0:
            return 0.5 if self.angle_max == 0.0 else 0.5 + theta / (2.0 * self.angle_max)
        return 0.5 - theta / (2.0 * self.angle_min)


@dataclass(frozen=True)
class ControlCommand:
    """Normalized actuator setpoints, one pair per thruster.

    thrust in [0, 1] scales max_force; angle in [0, 1] maps through the
    thruster's half-map. Values outside [0, 1] are clamped when converted
    to physical forces, not at construction.
    """

    thrust: tuple
    angle: tuple

    def __init__(self, thrust, angle):
        thrust = tuple(float(t) for t in np.atleast_1d(thrust))
        angle = tuple(float(a) for a in np.atleast_1d(angle))
        if len(thrust) != len(angle):
            raise ValueError(
                f"thrust and angle lengths differ: {len(thrust)} vs {len(angle)}"
            )
        object.__setattr__(self, "thrust", thrust)
        object.__setattr__(self, "angle", angle)


@dataclass
class VesselParams:
    """Rigid-body + added-mass model coefficients for one vessel.

    mass is the combined 3x3 inertia matrix (symmetric positive definite).
    coriolis_coeffs holds the two coefficient rows that generate the
    skew-symmetric Coriolis matrix; by default they are the first two rows
    of the mass matrix. linear_damping is a full 3x3 matrix, and
    quadratic_damping the diagonal coefficients multiplying |u|u, |v|v, |r|r.
    """

    name: str
    mass: np.ndarray
    linear_damping: np.ndarray
    quadratic_damping: np.ndarray
    thrusters: list
    length: float
    coriolis_coeffs: np.ndarray = None
    minv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mass = _as_matrix(self.mass, (3, 3), "mass_matrix")
        self.linear_damping = _as_matrix(self.linear_damping, (3, 3), "linear_damping")
        self.quadratic_damping = _as_matrix(self.quadratic_damping, (3,), "quadratic_damping")
        if self.coriolis_coeffs is None:
            self.coriolis_coeffs = self.mass[:2].copy()
        self.coriolis_coeffs = _as_matrix(self.coriolis_coeffs, (2, 3), "coriolis_coeffs")
        if not (self.length > 0.0 and math.isfinite(self.length)):
            raise ModelFormatError(f"length must be positive, got {self.length}")

        scale = float(np.abs(self.mass).max())
        if float(np.abs(self.mass - self.mass.T).max()) > 1e-9 * scale:
            raise MassMatrixError(f"{self.name}: mass matrix is not symmetric")
        try:
            # Cholesky doubles as the SPD check; the inverse is frozen here so
            # the integrator never refactorizes.
            np.linalg.cholesky(self.mass)
        except np.linalg.LinAlgError:
            raise MassMatrixError(f"{self.name}: mass matrix is not positive definite")
        self.minv = np.linalg.solve(self.mass, np.eye(3))

        if not self.thrusters:
            logger.info("%s: no thrusters configured, vessel will drift", self.name)
        self._check_dissipativity()

    def _check_dissipativity(self):
        # Advisory only: sample velocities and warn if damping could feed
        # energy back in. Loading still succeeds.
        probes = [
            (su * m, sv * m, sr * m)
            for m in (0.01, 0.5, 2.0)
            for su in (-1.0, 1.0)
            for sv in (-1.0, 1.0)
            for sr in (-1.0, 1.0)
        ]
        for nu in probes:
            arr = np.array(nu)
            power = float(arr @ damping(self, arr) @ arr)
            if power < 0.0:
                logger.warning(
                    "%s: damping does negative work at nu_r=%s (advisory)", self.name, nu
                )
                return


@dataclass(frozen=True)
class SimState:
    """Snapshot of one vessel: pose, water-relative velocity, sim time."""

    pose: Pose
    nu_r: BodyVelocity
    t: float = 0.0


def _as_matrix(value, shape, label):
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ModelFormatError(f"{label} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{label} contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# frame transforms
# ---------------------------------------------------------------------------


def rotation_matrix(psi):
    """Body-to-earth rotation about the z axis for heading psi."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def current_body(psi, current):
    """Current velocity expressed in the body frame of a vessel at heading psi.

    The current is irrotational, so its yaw component is identically zero.
    """
    return BodyVelocity(
        current.speed * math.cos(current.heading - psi),
        current.speed * math.sin(current.heading - psi),
        0.0,
    )


def absolute_velocity(nu_r, psi, current):
    """Total body-frame velocity nu = nu_r + nu_c(psi)."""
    nu_c = current_body(psi, current)
    return BodyVelocity(nu_r.u + nu_c.u, nu_r.v + nu_c.v, nu_r.r)


def ground_velocity(state, current):
    """Earth-frame velocity (x_dot, y_dot, psi_dot) of the vessel."""
    nu = absolute_velocity(state.nu_r, state.pose.psi, current)
    return rotation_matrix(state.pose.psi) @ nu.as_array()


def state_at_rest(pose, current=CurrentSpec(), t=0.0):
    """State of a vessel at rest over ground: nu_r cancels the local current.

    A hull released from its mooring has zero earth-frame velocity, which in
    a flowing ambient means a nonzero water-relative velocity.
    """
    nu_c = current_body(pose.psi, current)
    return SimState(pose=pose, nu_r=BodyVelocity(-nu_c.u, -nu_c.v, 0.0), t=t)


def with_current_changed(state, old_current, new_current):
    """Re-express nu_r when the ambient current changes mid-run.

    Preserves the absolute over-ground velocity so an environment change
    never teleports the hull's motion.
    """
    nu = absolute_velocity(state.nu_r, state.pose.psi, old_current)
    nu_c = current_body(state.pose.psi, new_current)
    return SimState(
        pose=state.pose,
        nu_r=BodyVelocity(nu.u - nu_c.u, nu.v - nu_c.v, nu.r),
        t=state.t,
    )


# ---------------------------------------------------------------------------
# forces
# ---------------------------------------------------------------------------


def thruster_forces(cmd, params):
    """Physical (force, angle) pairs for a normalized command.

    Thrust is clamped to [0, 1] and scaled by each thruster's max_force;
    the angle goes through the thruster's normalized half-map.
    """
    n = len(params.thrusters)
    if len(cmd.thrust) != n:
        raise ValueError(
            f"command has {len(cmd.thrust)} entries for {n} thrusters"
        )
    forces = np.empty(n)
    angles = np.empty(n)
    for i, th in enumerate(params.thrusters):
        forces[i] = min(1.0, max(0.0, cmd.thrust[i])) * th.max_force
        angles[i] = th.angle_from_normalized(cmd.angle[i])
    return forces, angles


def thruster_allocation(cmd, params):
    """Generalized force tau = (X, Y, N) produced by a normalized command.

    Each azimuth thruster at (dx, dy) with force F and angle theta contributes
    (F cos(theta), F sin(theta), F (dx sin(theta) - dy cos(theta))).
    """
    forces, angles = thruster_forces(cmd, params)
    tau = np.zeros(3)
    for th, f, theta in zip(params.thrusters, forces, angles):
        c, s = math.cos(theta), math.sin(theta)
        tau[0] += f * c
        tau[1] += f * s
        tau[2] += f * (th.dx * s - th.dy * c)
    return tau


def coriolis(params, nu_r):
    """Skew-symmetric Coriolis/centripetal matrix C(nu_r).

    Parameterized by two momentum-like scalars a1, a2 built from the stored
    coefficient rows, so nu^T C nu == 0 holds identically.
    """
    u, v, r = _triple(nu_r)
    cc = params.coriolis_coeffs
    a1 = cc[0, 0] * u + cc[0, 1] * v + cc[0, 2] * r
    a2 = cc[1, 0] * u + cc[1, 1] * v + cc[1, 2] * r
    return np.array([[0.0, 0.0, -a2], [0.0, 0.0, a1], [a2, -a1, 0.0]])


def damping(params, nu_r):
    """Total damping matrix D(nu_r) = D_linear + diag(d_i |nu_r_i|)."""
    u, v, r = _triple(nu_r)
    dq = params.quadratic_damping
    d = params.linear_damping.copy()
    d[0, 0] += dq[0] * abs(u)
    d[1, 1] += dq[1] * abs(v)
    d[2, 2] += dq[2] * abs(r)
    return d


def acceleration(params, nu_r, tau, tau_wind=ZERO_WIND):
    """Relative acceleration nu_r_dot = M^-1 (tau + tau_wind - C nu_r - D nu_r).

    This scalar expansion is the same right-hand side the integrator uses.
    """
    u, v, r = _triple(nu_r)
    tw = tau_wind.as_array() if isinstance(tau_wind, WindForce) else np.asarray(tau_wind)

    cc = params.coriolis_coeffs
    a1 = cc[0, 0] * u + cc[0, 1] * v + cc[0, 2] * r
    a2 = cc[1, 0] * u + cc[1, 1] * v + cc[1, 2] * r

    dl = params.linear_damping
    dq = params.quadratic_damping
    f0 = tau[0] + tw[0] + a2 * r - (dl[0, 0] + dq[0] * abs(u)) * u - dl[0, 1] * v - dl[0, 2] * r
    f1 = tau[1] + tw[1] - a1 * r - dl[1, 0] * u - (dl[1, 1] + dq[1] * abs(v)) * v - dl[1, 2] * r
    f2 = (
        tau[2] + tw[2] - a2 * u + a1 * v
        - dl[2, 0] * u - dl[2, 1] * v - (dl[2, 2] + dq[2] * abs(r)) * r
    )

    mi = params.minv
    return np.array(
        [
            mi[0, 0] * f0 + mi[0, 1] * f1 + mi[0, 2] * f2,
            mi[1, 0] * f0 + mi[1, 1] * f1 + mi[1, 2] * f2,
            mi[2, 0] * f0 + mi[2, 1] * f1 + mi[2, 2] * f2,
        ]
    )


def _triple(nu):
    if isinstance(nu, BodyVelocity):
        return nu.u, nu.v, nu.r
    return float(nu[0]), float(nu[1]), float(nu[2])


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

DEFAULT_DT = 0.02


def step(state, cmd, current, wind, params, dt=DEFAULT_DT):
    """Advance one fixed RK4 step of the coupled pose/velocity state.

    The thruster command is held constant over the step. The current's
    body-frame components are re-evaluated inside every RK4 stage because
    they depend on the stage heading. Raises IntegrationDivergedError naming
    the first non-finite component if the state blows up.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau = thruster_allocation(cmd, params) if params.thrusters else np.zeros(3)
    tw = wind.as_array()
    tau_total = tau + tw

    cs, ch = current.speed, current.heading

    def rhs(y):
        psi = y[2]
        ur, vr, rr = y[3], y[4], y[5]
        cu = cs * math.cos(ch - psi)
        cv = cs * math.sin(ch - psi)
        u, v = ur + cu, vr + cv
        c, s = math.cos(psi), math.sin(psi)
        acc = acceleration(params, (ur, vr, rr), tau_total)
        return np.array([c * u - s * v, s * u + c * v, rr, acc[0], acc[1], acc[2]])

    y0 = np.array(
        [state.pose.x, state.pose.y, state.pose.psi, state.nu_r.u, state.nu_r.v, state.nu_r.r]
    )
    k1 = rhs(y0)
    k2 = rhs(y0 + 0.5 * dt * k1)
    k3 = rhs(y0 + 0.5 * dt * k2)
    k4 = rhs(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(y1)):
        bad = _STATE_LABELS[int(np.argmin(np.isfinite(y1)))]
        raise IntegrationDivergedError(
            f"state component {bad!r} became non-finite at t={state.t + dt:.6g}"
        )

    return SimState(
        pose=Pose(y1[0], y1[1], y1[2]),
        nu_r=BodyVelocity(y1[3], y1[4], y1[5]),
        t=state.t + dt,
    )


def kinetic_energy(params, nu_r):
    """Quadratic form 0.5 nu_r^T M nu_r; the dissipation tests watch this."""
    arr = nu_r.as_array() if isinstance(nu_r, BodyVelocity) else np.asarray(nu_r)
    return 0.5 * float(arr @ params.mass @ arr)


# ---------------------------------------------------------------------------
# model loading
# ---------------------------------------------------------------------------

_MODELS_DIR = Path(__file__).parent / "models"


def bundled_models():
    """Names of vessel model files shipped with the package."""
    return sorted(p.stem.replace("_", "-") for p in _MODELS_DIR.glob("*.yaml"))


def load_model(source):
    """Load vessel parameters from a YAML path, bundled name, or dict.

    Raises ModelFormatError / MassMatrixError / ThrusterConfigError on the
    respective violation so callers can distinguish config problems.
    """
    if isinstance(source, dict):
        return params_from_dict(source)
    path = Path(source)
    if not path.exists():
        bundled = _MODELS_DIR / (str(source).replace("-", "_") + ".yaml")
        if bundled.exists():
            path = bundled
        else:
            raise ModelFormatError(f"vessel model not found: {source}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ModelFormatError(f"{path}: YAML parse failure: {e}")
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a mapping at top level")
    return params_from_dict(doc)


def params_from_dict(doc):
    """Validate a parsed model document and build VesselParams."""
    name = doc.get("name", "unnamed")
    required = ("mass_matrix", "linear_damping", "quadratic_damping", "length", "thrusters")
    missing = [k for k in required if doc.get(k) is None]
    if missing:
        raise ModelFormatError(
            f"{name}: missing or unfilled fields: {', '.join(missing)}. "
            "Template files ship without coefficients; fill them from a "
            "published identification before use."
        )
    thrusters = []
    for i, td in enumerate(doc["thrusters"]):
        if not isinstance(td, dict):
            raise ModelFormatError(f"{name}: thruster {i} must be a mapping")
        try:
            if "angle_deg" in td:
                amin = amax = math.radians(float(td["angle_deg"]))
            else:
                amin = math.radians(float(td.get("angle_min_deg", 0.0)))
                amax = math.radians(float(td.get("angle_max_deg", 0.0)))
            thrusters.append(
                Thruster(
                    dx=float(td["dx"]),
                    dy=float(td["dy"]),
                    max_force=float(td["max_force"]),
                    angle_min=amin,
                    angle_max=amax,
                )
            )
        except KeyError as e:
            raise ModelFormatError(f"{name}: thruster {i} missing key {e}")
    return VesselParams(
        name=name,
        mass=doc["mass_matrix"],
        linear_damping=doc["linear_damping"],
        quadratic_damping=doc["quadratic_damping"],
        thrusters=thrusters,
        length=float(doc["length"]),
        coriolis_coeffs=doc.get("coriolis_coeffs"),
    )
