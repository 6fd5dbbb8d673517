"""Kinematic, geometric, and map primitives shared by every planner module.

All types are immutable values; all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(psi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    psi = math.fmod(psi, TWO_PI)
    if psi > math.pi:
        psi -= TWO_PI
    elif psi <= -math.pi:
        psi += TWO_PI
    return psi


@dataclass(frozen=True)
class AgentState:
    """Planar kinematic state: position, speed (>= 0), heading in (-pi, pi]."""

    x: float
    y: float
    v: float
    psi: float

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError(f"speed must be nonnegative, got {self.v}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def velocity(self) -> np.ndarray:
        return np.array([self.v * math.cos(self.psi), self.v * math.sin(self.psi)])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.psi])


@dataclass(frozen=True)
class UnicycleInput:
    """Control input of the dynamically extended unicycle: accel and yaw rate."""

    a: float
    omega: float


@dataclass(frozen=True)
class DynamicsLimits:
    a_max: float = 4.0
    a_min: float = -6.0
    omega_max: float = 1.0
    v_max: float = 20.0
    kappa_max: float = 0.3

    def __post_init__(self):
        if not (self.a_min < 0.0 < self.a_max):
            raise ValueError("need a_min < 0 < a_max")
        if self.omega_max <= 0 or self.v_max <= 0 or self.kappa_max <= 0:
            raise ValueError("omega_max, v_max, kappa_max must be positive")

    def clamp(self, u: UnicycleInput) -> UnicycleInput:
        a = min(max(u.a, self.a_min), self.a_max)
        omega = min(max(u.omega, -self.omega_max), self.omega_max)
        return UnicycleInput(a, omega)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled motion segment: samples[k] is the state at t0 + k*dt.

    A zero-duration segment is a single sample.
    """

    t0: float
    dt: float
    samples: tuple

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if len(self.samples) == 0:
            raise ValueError("samples must be non-empty")
        object.__setattr__(self, "samples", tuple(self.samples))

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def start(self) -> AgentState:
        return self.samples[0]

    @property
    def end(self) -> AgentState:
        return self.samples[-1]

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.samples])

    def arrays(self):
        """(x, y, v, psi) arrays over the samples."""
        a = np.array([[s.x, s.y, s.v, s.psi] for s in self.samples])
        return a[:, 0], a[:, 1], a[:, 2], a[:, 3]

    def shifted(self, t0: float) -> "Trajectory":
        return replace(self, t0=t0)

    def state_at(self, t: float) -> AgentState:
        """Linearly interpolated state at time t, clamped to the support."""
        tau = (t - self.t0) / self.dt
        k = int(math.floor(tau))
        if k < 0:
            return self.samples[0]
        if k >= len(self.samples) - 1:
            return self.samples[-1]
        frac = tau - k
        s0, s1 = self.samples[k], self.samples[k + 1]
        dpsi = wrap_angle(s1.psi - s0.psi)
        return AgentState(
            x=s0.x + frac * (s1.x - s0.x),
            y=s0.y + frac * (s1.y - s0.y),
            v=max(0.0, s0.v + frac * (s1.v - s0.v)),
            psi=wrap_angle(s0.psi + frac * dpsi),
        )


@dataclass(frozen=True)
class Footprint:
    """Axis-aligned-in-body-frame rectangular footprint."""

    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint dimensions must be positive")


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: np.ndarray  # (n, 2), n >= 2
    speed_limit: float
    successors: tuple = ()

    def __post_init__(self):
        cl = np.asarray(self.centerline, dtype=float)
        if cl.ndim != 2 or cl.shape[0] < 2 or cl.shape[1] != 2:
            raise ValueError("centerline must be an (n>=2, 2) array")
        seg = np.diff(cl, axis=0)
        if not np.all(np.hypot(seg[:, 0], seg[:, 1]) > 0):
            raise ValueError("centerline must have strictly increasing arc length")
        object.__setattr__(self, "centerline", cl)
        object.__setattr__(self, "successors", tuple(self.successors))

    @property
    def length(self) -> float:
        seg = np.diff(self.centerline, axis=0)
        return float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))


@dataclass(frozen=True)
class LaneGraph:
    lanes: tuple = ()
    drivable_area: tuple = ()  # tuple of (n, 2) polygon vertex arrays

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(self.lanes))
        polys = tuple(np.asarray(p, dtype=float) for p in self.drivable_area)
        for p in polys:
            if p.ndim != 2 or p.shape[0] < 3 or p.shape[1] != 2:
                raise ValueError("drivable-area polygon needs >= 3 vertices")
        object.__setattr__(self, "drivable_area", polys)

    def lane_by_id(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)

    def nearest_lane(self, x: float, y: float) -> Lane | None:
        best, best_d = None, math.inf
        for lane in self.lanes:
            _, lat, _ = project_to_lane((x, y), lane.centerline)
            if abs(lat) < best_d:
                best, best_d = lane, abs(lat)
        return best


# ---------------------------------------------------------------------------
# dynamics


def _unicycle_deriv(state: np.ndarray, a: float, omega: float) -> np.ndarray:
    x, y, v, psi = state
    return np.array([v * math.cos(psi), v * math.sin(psi), a, omega])


def integrate_unicycle(
    state: AgentState,
    u: UnicycleInput,
    dt: float,
    limits: DynamicsLimits = DynamicsLimits(),
) -> AgentState:
    """RK4 step of the extended unicycle; speed clamped to [0, v_max].

    Steps longer than 0.1 s are split into equal substeps so the endpoint
    stays within 1e-6 m of the closed-form constant-input arc.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_sub = max(1, int(math.ceil(dt / 0.1 - 1e-12)))
    h = dt / n_sub
    s = state.as_array()
    for _ in range(n_sub):
        k1 = _unicycle_deriv(s, u.a, u.omega)
        k2 = _unicycle_deriv(s + 0.5 * h * k1, u.a, u.omega)
        k3 = _unicycle_deriv(s + 0.5 * h * k2, u.a, u.omega)
        k4 = _unicycle_deriv(s + h * k3, u.a, u.omega)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s[2] = min(max(s[2], 0.0), limits.v_max)
    return AgentState(s[0], s[1], s[2], wrap_angle(s[3]))


def rollout_unicycle(
    state: AgentState,
    u: UnicycleInput,
    duration: float,
    dt: float,
    limits: DynamicsLimits = DynamicsLimits(),
    t0: float = 0.0,
) -> Trajectory:
    """Constant-input unicycle rollout sampled every dt (endpoints included)."""
    n = int(round(duration / dt))
    samples = [state]
    cur = state
    for _ in range(n):
        cur = integrate_unicycle(cur, u, dt, limits)
        samples.append(cur)
    return Trajectory(t0=t0, dt=dt, samples=tuple(samples))


# ---------------------------------------------------------------------------
# oriented-box geometry


def footprint_corners(x, y, psi, fp: Footprint) -> np.ndarray:
    """Corners of the oriented footprint rectangle, shape (..., 4, 2).

    Accepts scalars or broadcastable arrays for x, y, psi.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    hl, hw = fp.length / 2.0, fp.width / 2.0
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    c, s = np.cos(psi), np.sin(psi)
    gx = x[..., None] + local[:, 0] * c[..., None] - local[:, 1] * s[..., None]
    gy = y[..., None] + local[:, 0] * s[..., None] + local[:, 1] * c[..., None]
    return np.stack([gx, gy], axis=-1)


def _box_axes(psi) -> np.ndarray:
    """The two face normals of an oriented rectangle, shape (..., 2, 2)."""
    psi = np.asarray(psi, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    return np.stack(
        [np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)], axis=-2
    )


def obb_overlap(corners_a: np.ndarray, corners_b: np.ndarray, axes: np.ndarray):
    """Separating-axis overlap test, vectorized over leading dims.

    corners_*: (..., 4, 2); axes: (..., k, 2). Returns boolean array (...,).
    Touching boxes count as overlapping.
    """
    pa = np.einsum("...ij,...kj->...ki", corners_a, axes)  # (..., k, 4)
    pb = np.einsum("...ij,...kj->...ki", corners_b, axes)
    sep = (pa.max(axis=-1) < pb.min(axis=-1)) | (pb.max(axis=-1) < pa.min(axis=-1))
    return ~np.any(sep, axis=-1)


def _point_segment_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray):
    """Distances from points (..., p, 2) to segments (..., q, 2)-(..., q, 2).

    Returns (..., p, q).
    """
    d = seg_b - seg_a  # (..., q, 2)
    len2 = np.maximum(np.sum(d * d, axis=-1), 1e-300)  # (..., q)
    ap = points[..., :, None, :] - seg_a[..., None, :, :]  # (..., p, q, 2)
    t = np.clip(np.sum(ap * d[..., None, :, :], axis=-1) / len2[..., None, :], 0.0, 1.0)
    closest = seg_a[..., None, :, :] + t[..., None] * d[..., None, :, :]
    diff = points[..., :, None, :] - closest
    return np.hypot(diff[..., 0], diff[..., 1])


def obb_clearance(
    x_a, y_a, psi_a, fp_a: Footprint, x_b, y_b, psi_b, fp_b: Footprint
):
    """Clearance between two oriented boxes; 0 when overlapping.

    All pose arguments broadcast; returns an array (or scalar) of distances.
    """
    ca = footprint_corners(x_a, y_a, psi_a, fp_a)
    cb = footprint_corners(x_b, y_b, psi_b, fp_b)
    psi_a, psi_b = np.broadcast_arrays(np.asarray(psi_a, float), np.asarray(psi_b, float))
    axes = np.concatenate([_box_axes(psi_a), _box_axes(psi_b)], axis=-2)
    hit = obb_overlap(ca, cb, axes)
    ea, eb = np.roll(ca, -1, axis=-2), np.roll(cb, -1, axis=-2)
    d_ab = _point_segment_distance(ca, cb, eb).min(axis=(-1, -2))
    d_ba = _point_segment_distance(cb, ca, ea).min(axis=(-1, -2))
    dist = np.minimum(d_ab, d_ba)
    return np.where(hit, 0.0, dist)


def check_collision(
    ego: AgentState, ego_fp: Footprint, other: AgentState, other_fp: Footprint
) -> bool:
    """True iff the two oriented footprint rectangles overlap (SAT)."""
    ca = footprint_corners(ego.x, ego.y, ego.psi, ego_fp)
    cb = footprint_corners(other.x, other.y, other.psi, other_fp)
    axes = np.concatenate([_box_axes(ego.psi), _box_axes(other.psi)], axis=-2)
    return bool(obb_overlap(ca, cb, axes))


def point_in_polygon(px: float, py: float, poly: np.ndarray) -> bool:
    """Ray-casting point-in-polygon test; boundary points count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # on-segment check: boundary is inside
        cross = (px - x1) * (y2 - y1) - (py - y1) * (x2 - x1)
        if abs(cross) < 1e-12:
            if min(x1, x2) - 1e-12 <= px <= max(x1, x2) + 1e-12 and min(
                y1, y2
            ) - 1e-12 <= py <= max(y1, y2) + 1e-12:
                return True
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xint:
                inside = not inside
    return inside


def is_offroad(state: AgentState, fp: Footprint, lane_map: LaneGraph) -> bool:
    """True iff any footprint corner is outside the drivable-area union."""
    if not lane_map.drivable_area:
        raise ValueError("map has no drivable area")
    corners = footprint_corners(state.x, state.y, state.psi, fp)
    for cx, cy in corners:
        if not any(point_in_polygon(cx, cy, poly) for poly in lane_map.drivable_area):
            return True
    return False


def project_to_lane(pos, centerline: np.ndarray):
    """Nearest-point polyline projection.

    Returns (arc_length, lateral_offset, lane_heading); lateral offset is
    signed, positive to the left of the lane direction.
    """
    p = np.asarray(pos, dtype=float)
    cl = np.asarray(centerline, dtype=float)
    a, b = cl[:-1], cl[1:]
    d = b - a
    seg_len = np.hypot(d[:, 0], d[:, 1])
    len2 = np.maximum(seg_len**2, 1e-300)
    t = np.clip(((p - a) * d).sum(axis=1) / len2, 0.0, 1.0)
    closest = a + t[:, None] * d
    dist = np.hypot(*(p - closest).T)
    i = int(np.argmin(dist))
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arc = float(cum[i] + t[i] * seg_len[i])
    heading = math.atan2(d[i, 1], d[i, 0])
    rel = p - closest[i]
    lateral = float(-math.sin(heading) * rel[0] + math.cos(heading) * rel[1])
    return arc, lateral, heading


def project_to_lane_batch(points: np.ndarray, centerline: np.ndarray):
    """Vectorized nearest-point projection for an (n, 2) array of points.

    Returns (arc, lateral, heading) arrays of length n with the same
    conventions as project_to_lane.
    """
    pts = np.asarray(points, dtype=float)
    cl = np.asarray(centerline, dtype=float)
    a, b = cl[:-1], cl[1:]
    d = b - a
    seg_len = np.hypot(d[:, 0], d[:, 1])
    len2 = np.maximum(seg_len**2, 1e-300)
    rel = pts[:, None, :] - a[None, :, :]  # (n, m, 2)
    t = np.clip((rel * d).sum(axis=2) / len2, 0.0, 1.0)  # (n, m)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    diff = pts[:, None, :] - closest
    dist2 = (diff**2).sum(axis=2)
    i = np.argmin(dist2, axis=1)  # (n,)
    rows = np.arange(len(pts))
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arc = cum[i] + t[rows, i] * seg_len[i]
    heading = np.arctan2(d[i, 1], d[i, 0])
    best = diff[rows, i]
    lateral = -np.sin(heading) * best[:, 0] + np.cos(heading) * best[:, 1]
    return arc, lateral, heading


def concat_trajectories(parts) -> Trajectory:
    """Join consecutive segments sharing dt; duplicated join samples dropped.

    Zero-duration (single-sample) parts other than the first are treated as
    join points and skipped.
    """
    parts = [p for p in parts if p is not None]
    if not parts:
        raise ValueError("nothing to concatenate")
    first = parts[0]
    samples = list(first.samples)
    for p in parts[1:]:
        if abs(p.dt - first.dt) > 1e-12:
            raise ValueError("mismatched dt in concatenation")
        if len(p.samples) == 1:
            continue
        samples.extend(p.samples[1:])
    return Trajectory(t0=first.t0, dt=first.dt, samples=tuple(samples))


def lane_point_at(centerline: np.ndarray, arc: float):
    """Point and heading on the polyline at the given (clamped) arc length."""
    cl = np.asarray(centerline, dtype=float)
    d = np.diff(cl, axis=0)
    seg_len = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arc = min(max(arc, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, arc, side="right") - 1)
    i = min(i, len(seg_len) - 1)
    frac = (arc - cum[i]) / seg_len[i]
    pt = cl[i] + frac * d[i]
    heading = math.atan2(d[i, 1], d[i, 0])
    return float(pt[0]), float(pt[1]), heading


def lane_points_at_batch(centerline: np.ndarray, arcs: np.ndarray):
    """Vectorized lane_point_at: (x, y, heading) arrays for an arc array."""
    cl = np.asarray(centerline, dtype=float)
    d = np.diff(cl, axis=0)
    seg_len = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arcs = np.clip(np.asarray(arcs, dtype=float), 0.0, float(cum[-1]))
    i = np.searchsorted(cum, arcs, side="right") - 1
    i = np.clip(i, 0, len(seg_len) - 1)
    frac = (arcs - cum[i]) / seg_len[i]
    pts = cl[i] + frac[:, None] * d[i]
    heading = np.arctan2(d[i, 1], d[i, 0])
    return pts[:, 0], pts[:, 1], heading
