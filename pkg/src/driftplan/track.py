"""Track centerline with a Frenet frame.

A track is a polyline resampled to uniform spacing, plus width and a
closed/open flag.  Headings are chord directions over a +-2.5 m window
(continuous and unwrapped along the run); curvature is the finite difference
of that heading over the same window.  The Frenet projection solves
(p - c(s)) . t(s) = 0 with the interpolated tangent field, which makes
from_frenet(to_frenet(p)) exact to root-finder tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import FoldOverError, ProjectionError, TrackParseError
from .vehicle import Pose, wrap_angle

__all__ = [
    "FrenetPose",
    "Track",
    "load_track",
    "save_track",
    "straight_track",
    "circle_track",
    "mixed_circuit",
    "uturn_track",
]

SPACING = 0.5          # resampled vertex spacing [m]
HEADING_WINDOW = 2.5   # chord half-window for heading/curvature [m]
HINT_WINDOW = 50.0     # projection search half-window around hint_s [m]
MAX_OFFCENTER = 5.0    # projection allowed up to this many widths off center


@dataclass
class FrenetPose:
    s: float  # arc length along the centerline [m]
    d: float  # signed lateral offset, positive left [m]


class Track:
    """Uniformly resampled centerline with width; closed or open."""

    def __init__(self, xs, ys, width: float, closed: bool, spacing: float):
        self.xs = np.asarray(xs, dtype=float)       # includes closing vertex if closed
        self.ys = np.asarray(ys, dtype=float)
        self.width = float(width)
        self.closed = bool(closed)
        self.spacing = float(spacing)
        n = self.xs.size
        seg = np.hypot(np.diff(self.xs), np.diff(self.ys))
        self.s_grid = np.concatenate(([0.0], np.cumsum(seg)))
        self.length = float(self.s_grid[-1])
        self._build_heading_curvature()
        self._build_segments()

    def _build_segments(self):
        # per-segment geometry cached for the batched projection
        ex = np.diff(self.xs)
        ey = np.diff(self.ys)
        len2 = ex * ex + ey * ey
        len2[len2 == 0.0] = 1.0
        vx = self.xs[:-1]
        vy = self.ys[:-1]
        self._seg_ex = ex
        self._seg_ey = ey
        self._seg_len2 = len2
        self._seg_len = np.sqrt(len2)
        self._seg_exy = np.stack([ex, ey])                  # (2, n_seg)
        self._seg_vxy = np.stack([vx, vy])                  # (2, n_seg)
        self._seg_c0 = vx * ex + vy * ey
        self._seg_cc = vx * vx + vy * vy

    # -- construction -------------------------------------------------------

    @classmethod
    def from_waypoints(cls, xy, width: float, closed: bool,
                       spacing: float = SPACING) -> "Track":
        """Resample a waypoint polyline to uniform spacing.

        The resampled vertices lie on the input polyline, so total arc length
        is preserved up to corner cutting at input vertices.
        """
        xy = np.asarray(xy, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 2:
            raise ValueError("waypoints must be an (n >= 2, 2) array")
        if width <= 0.0:
            raise ValueError(f"width must be > 0, got {width}")
        if closed and not np.allclose(xy[0], xy[-1]):
            xy = np.vstack([xy, xy[0]])
        seg = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
        if np.any(seg == 0.0):
            xy = xy[np.concatenate(([True], seg > 0.0))]
            seg = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
        u = np.concatenate(([0.0], np.cumsum(seg)))
        total = u[-1]
        if total <= 0.0:
            raise ValueError("degenerate waypoint polyline")
        if closed:
            n = max(8, int(round(total / spacing)))
            s_new = np.arange(n) * (total / n)
        else:
            n = max(2, int(round(total / spacing)) + 1)
            s_new = np.linspace(0.0, total, n)
        xs = np.interp(s_new, u, xy[:, 0])
        ys = np.interp(s_new, u, xy[:, 1])
        if closed:
            xs = np.concatenate([xs, xs[:1]])
            ys = np.concatenate([ys, ys[:1]])
        return cls(xs, ys, width, closed, total / n if closed else total / (n - 1))

    def _build_heading_curvature(self):
        k = max(1, int(round(HEADING_WINDOW / self.spacing)))
        if self.closed:
            px = self.xs[:-1]
            py = self.ys[:-1]
            n = px.size
            ip = (np.arange(n) + k) % n
            im = (np.arange(n) - k) % n
            raw = np.arctan2(py[ip] - py[im], px[ip] - px[im])
            theta = np.unwrap(raw)
            closing = math.remainder(raw[0] - theta[-1], 2.0 * math.pi)
            theta = np.concatenate([theta, [theta[-1] + closing]])
        else:
            n = self.xs.size
            ip = np.minimum(n - 1, np.arange(n) + k)
            im = np.maximum(0, np.arange(n) - k)
            theta = np.unwrap(np.arctan2(self.ys[ip] - self.ys[im],
                                         self.xs[ip] - self.xs[im]))
        self.theta = theta
        self._winding = float(theta[-1] - theta[0])  # total heading change

        w = k * self.spacing
        s = self.s_grid
        if self.closed:
            th_p = self._theta_at(s + w)
            th_m = self._theta_at(s - w)
            self.kappa = (th_p - th_m) / (2.0 * w)
        else:
            sp = np.minimum(s + w, self.length)
            sm = np.maximum(s - w, 0.0)
            span = sp - sm
            span[span == 0.0] = 1.0
            self.kappa = (np.interp(sp, s, theta) - np.interp(sm, s, theta)) / span

    # -- scalar field queries -----------------------------------------------

    def _wrap_s(self, s):
        if self.closed:
            return np.mod(s, self.length)
        return np.clip(s, 0.0, self.length)

    def _theta_at(self, s):
        """Heading at s, continuous across the closure (closed tracks add the
        winding per lap)."""
        if self.closed:
            laps = np.floor(np.asarray(s, dtype=float) / self.length)
            return np.interp(s - laps * self.length, self.s_grid, self.theta) \
                + laps * self._winding
        return np.interp(np.clip(s, 0.0, self.length), self.s_grid, self.theta)

    def heading_at(self, s: float) -> float:
        """Centerline heading [rad], unwrapped along the track."""
        return float(self._theta_at(s))

    def curvature_at(self, s: float) -> float:
        """Signed curvature [1/m]; positive turns left."""
        return float(np.interp(self._wrap_s(s), self.s_grid, self.kappa))

    def centerline_at(self, s):
        s = self._wrap_s(s)
        return (float(np.interp(s, self.s_grid, self.xs)),
                float(np.interp(s, self.s_grid, self.ys)))

    # -- Frenet transforms ---------------------------------------------------

    def to_frenet(self, pose, hint_s: float | None = None) -> FrenetPose:
        """Project a pose (or (x, y) pair) onto the centerline.

        With hint_s the search is restricted to +-50 m around the hint,
        otherwise it is global.  Raises ProjectionError when the pose lies
        further than 5 track widths from the centerline.
        """
        if isinstance(pose, Pose):
            px, py = pose.x, pose.y
        else:
            px, py = float(pose[0]), float(pose[1])

        if self.closed:
            vx, vy, sv = self.xs[:-1], self.ys[:-1], self.s_grid[:-1]
        else:
            vx, vy, sv = self.xs, self.ys, self.s_grid
        n = vx.size

        if hint_s is None:
            cand = np.arange(n)
        else:
            w = int(math.ceil(HINT_WINDOW / self.spacing))
            c = int(round(float(self._wrap_s(hint_s)) / self.spacing))
            offs = np.arange(-w, w + 1)
            cand = (c + offs) % n if self.closed else np.clip(c + offs, 0, n - 1)
        d2 = (vx[cand] - px) ** 2 + (vy[cand] - py) ** 2
        i_best = int(cand[int(np.argmin(d2))])
        if math.sqrt(float(d2.min())) > MAX_OFFCENTER * self.width:
            raise ProjectionError(
                f"({px}, {py}) is more than {MAX_OFFCENTER} widths off the centerline")

        def g(u):
            cx, cy = self.centerline_at(u)
            th = self._theta_at(u)
            return (px - cx) * math.cos(th) + (py - cy) * math.sin(th)

        s_i = float(sv[i_best])
        root = None
        for half in (2, 6, 20):
            us = s_i + self.spacing * np.arange(-half, half + 1)
            if not self.closed:
                us = np.clip(us, 0.0, self.length)
            gs = [g(u) for u in us]
            hit = [j for j in range(len(us) - 1)
                   if us[j] != us[j + 1] and gs[j] * gs[j + 1] <= 0.0]
            if hit:
                j = min(hit, key=lambda j: abs(us[j] + 0.5 * self.spacing - s_i))
                if gs[j] == 0.0:
                    root = float(us[j])
                elif gs[j + 1] == 0.0:
                    root = float(us[j + 1])
                else:
                    root = float(brentq(g, us[j], us[j + 1], xtol=1e-12))
                break
        if root is None:
            if not self.closed:
                root = 0.0 if abs(g(0.0)) <= abs(g(self.length)) else self.length
            else:
                raise ProjectionError(f"no projection root near s = {s_i}")

        cx, cy = self.centerline_at(root)
        th = self._theta_at(root)
        d = -(px - cx) * math.sin(th) + (py - cy) * math.cos(th)
        s_out = float(self._wrap_s(root))
        if self.closed and s_out >= self.length:
            s_out = 0.0
        return FrenetPose(s_out, float(d))

    def from_frenet(self, fp: FrenetPose) -> Pose:
        """Pose at (s, d): centerline point offset along the left normal,
        heading along the centerline.  Raises FoldOverError when |d| reaches
        the local curvature radius."""
        s = float(fp.s)
        if not self.closed and not (-1e-9 <= s <= self.length + 1e-9):
            raise ValueError(f"s = {s} outside [0, {self.length}]")
        kap = self.curvature_at(s)
        if kap != 0.0 and abs(fp.d) >= 1.0 / abs(kap):
            raise FoldOverError(f"|d| = {abs(fp.d)} >= curvature radius {1.0 / abs(kap)}")
        cx, cy = self.centerline_at(s)
        th = self._theta_at(s)
        return Pose(cx - fp.d * math.sin(th), cy + fp.d * math.cos(th), wrap_angle(th))

    def on_road(self, fp: FrenetPose) -> bool:
        """True when |d| <= width/2 (boundary inclusive)."""
        return abs(fp.d) <= 0.5 * self.width

    def project_many(self, xy: np.ndarray, hint_s: float | None = None,
                     window: float = HINT_WINDOW):
        """Vectorized approximate projection of an (m, 2) array.

        Nearest-segment projection onto the resampled polyline.  Compared with
        to_frenet, d is accurate to millimeters and s to roughly d * dtheta
        per vertex (a couple of decimeters at full road offset in a 15 m
        corner), both inside the collision margins.  Returns (s, d) arrays;
        s is unwrapped near hint_s when a hint is given, wrapped to
        [0, length] otherwise.
        """
        xy = np.asarray(xy, dtype=float)
        n_seg = self.xs.size - 1
        if hint_s is None:
            sid = np.arange(n_seg)
            s_start = self.s_grid[:-1]
        else:
            w = int(math.ceil(window / self.spacing))
            c = int(round(float(self._wrap_s(hint_s)) / self.spacing))
            if self.closed:
                sid = (c + np.arange(-w, w)) % n_seg
                raw = self.s_grid[sid]
                # unwrap across the closure seam, anchored near hint_s
                inc = np.mod(np.diff(raw), self.length)
                s0 = raw[0] + self.length * round(
                    (float(hint_s) - w * self.spacing - raw[0]) / self.length)
                s_start = np.concatenate(([s0], s0 + np.cumsum(inc)))
            else:
                lo = max(0, c - w)
                hi = min(n_seg, c + w)
                sid = np.arange(lo, hi)
                s_start = self.s_grid[sid]

        # argmin over an expanded |p - proj|^2; exact terms are recomputed for
        # the winning segment only, so the expansion error never reaches s, d
        tn = xy @ self._seg_exy[:, sid] - self._seg_c0[sid]
        len2 = self._seg_len2[sid]
        t = np.clip(tn / len2, 0.0, 1.0)
        dist2 = (xy * xy).sum(axis=1)[:, None] - 2.0 * (xy @ self._seg_vxy[:, sid]) \
            + self._seg_cc[sid] - t * (2.0 * tn - t * len2)
        j = np.argmin(dist2, axis=1)
        rows = np.arange(xy.shape[0])

        g = sid[j]
        tj = t[rows, j]
        fx = xy[:, 0] - self.xs[g] - tj * self._seg_ex[g]
        fy = xy[:, 1] - self.ys[g] - tj * self._seg_ey[g]
        elen = self._seg_len[g]
        s_out = s_start[j] + tj * elen
        cross = (self._seg_ex[g] * fy - self._seg_ey[g] * fx) / elen
        return s_out, cross


# ---------------------------------------------------------------------------
# file format

def load_track(path) -> Track:
    """Read the track CSV: '#' preamble with width=... closed=..., an 'x,y'
    header, then one waypoint per line."""
    width = None
    closed = None
    pts = []
    header_seen = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, _, val = tok.partition("=")
                        try:
                            if key == "width":
                                width = float(val)
                            elif key == "closed":
                                closed = bool(int(val))
                        except ValueError as exc:
                            raise TrackParseError(
                                f"{path}: line {lineno}: bad value for {key!r}: {val!r}"
                            ) from exc
                continue
            if not header_seen:
                if line.replace(" ", "") != "x,y":
                    raise TrackParseError(f"{path}: line {lineno}: expected 'x,y' header")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TrackParseError(f"{path}: line {lineno}: expected two fields")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise TrackParseError(
                    f"{path}: line {lineno}: malformed numeric field") from exc
    if width is None or closed is None:
        raise TrackParseError(f"{path}: preamble must set width= and closed=")
    if len(pts) < 2:
        raise TrackParseError(f"{path}: need at least two waypoints")
    return Track.from_waypoints(np.asarray(pts), width, closed)


def save_track(path, xy, width: float, closed: bool) -> None:
    """Write waypoints in the track CSV format."""
    xy = np.asarray(xy, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"# width={width!r} closed={1 if closed else 0}\n")
        fh.write("x,y\n")
        for x, y in xy:
            fh.write(f"{float(x)!r},{float(y)!r}\n")


# ---------------------------------------------------------------------------
# built-in geometries

def straight_track(length: float = 300.0, width: float = 10.0) -> Track:
    """Open straight along +x starting at the origin."""
    n = max(2, int(round(length)) + 1)
    xs = np.linspace(0.0, length, n)
    return Track.from_waypoints(np.stack([xs, np.zeros_like(xs)], axis=1),
                                width, closed=False)


def circle_track(radius: float = 40.0, width: float = 10.0, n: int = 720) -> Track:
    """Closed regular n-gon approximating a counter-clockwise circle."""
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    xy = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    return Track.from_waypoints(xy, width, closed=True)


def _arc_points(cx, cy, r, a0, a1, step=0.25):
    n = max(2, int(math.ceil(abs(a1 - a0) * r / step)))
    ang = np.linspace(a0, a1, n, endpoint=False)
    return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)


def _line_points(x0, y0, x1, y1, step=0.25):
    n = max(2, int(math.ceil(math.hypot(x1 - x0, y1 - y0) / step)))
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    return np.stack([x0 + (x1 - x0) * t, y0 + (y1 - y0) * t], axis=1)


def mixed_circuit(width: float = 12.0) -> Track:
    """Closed test circuit, counter-clockwise, length about 373 m.

    A 45 m-radius half-moon off the start straight, then a ladder of three
    15 m U-turns (left, right, left) joined by 30 m straights.  Both
    turning senses, curvature radii 15 and 45 m.

    Geometry is tuned to the vehicle.  Steady cornering tops out near
    10 m/s even on the wide moon (drift equilibria eat most of the
    mu = 0.6 friction budget), so no straight runs long enough to feed a
    corner much above 13 m/s, and hot entries survive by running wide
    inside the 12 m width.  The tight radius everywhere else is
    deliberate: a 15 m wall becomes visible within the search horizon
    early enough to brake or flip for it, while gentler bends (30 m was
    tried) let wrong-sense or overspeed branches survive past the horizon
    and trap the search against the outer edge.  Each change of turning
    sense gets a 30 m straight: unwinding a drift attitude takes about
    15 m of road, and the remainder is acceleration room."""
    deg = math.radians
    parts = [
        _line_points(0.0, 30.0, 15.0, 30.0),
        _arc_points(15.0, 75.0, 45.0, deg(-90), deg(90)),       # wide left half-moon
        _line_points(15.0, 120.0, 0.0, 120.0),
        _arc_points(0.0, 105.0, 15.0, deg(90), deg(270)),       # U-turn, left
        _line_points(0.0, 90.0, 30.0, 90.0),
        _arc_points(30.0, 75.0, 15.0, deg(90), deg(-90)),       # U-turn, right
        _line_points(30.0, 60.0, 0.0, 60.0),
        _arc_points(0.0, 45.0, 15.0, deg(90), deg(270)),        # U-turn, left
    ]
    return Track.from_waypoints(np.vstack(parts), width, closed=True)


def uturn_track(width: float = 10.0) -> Track:
    """Open test track: 60 m approach, 15 m-radius U-turn, 60 m return.

    The tight-corner instance for drift studies; entering the turn much
    above 7 m/s puts steady cornering out of reach and makes sideslip the
    only way to keep progress up."""
    deg = math.radians
    parts = [
        _line_points(0.0, 0.0, 60.0, 0.0),
        _arc_points(60.0, 15.0, 15.0, deg(-90), deg(90)),       # U-turn, left
        _line_points(60.0, 30.0, 0.0, 30.0),
    ]
    return Track.from_waypoints(np.vstack(parts), width, closed=False)
