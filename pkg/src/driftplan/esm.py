"""Equilibrium States Manifold: steady-state cornering solutions of the full model.

Sweeping steering angle and drive slip over a grid and solving
(v_dot, beta_dot, psi_ddot) = 0 yields scattered samples in the (beta, psidot)
plane.  A Delaunay triangulation of those samples gives a piecewise-linear map
(beta, psidot) -> (v, delta, lambda) that the planner queries when it expands
steady-state primitives.  A counter-clockwise manifold (psidot > 0) is built
directly; the clockwise one is its mirror image.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import matplotlib.tri as mtri

from .errors import (
    DegenerateInputError,
    EmptySweepError,
    InsufficientSamplesError,
    ManifoldFormatError,
    NoConvergenceError,
    OutOfDomainError,
)
from .vehicle import (
    ControlInput,
    DynamicState,
    TireParams,
    VehicleParams,
    rollout_full,
)
from .vehicle import _derivs_raw

__all__ = [
    "EquilibriumPoint",
    "SweepResult",
    "Manifold",
    "ManifoldPair",
    "solve_equilibrium",
    "sweep_inputs",
    "build_manifold",
    "query",
    "save_manifold",
    "load_manifold",
    "params_hash",
    "default_delta_values",
    "default_lambda_values",
]

# Newton defaults
TOL_RESIDUAL = 1e-8     # max-abs of (v_dot, beta_dot, psi_ddot)
MAX_ITER = 50
FD_STEP = 1e-6          # central-difference Jacobian step
MAX_HALVINGS = 12

# domain defaults
R_C_MIN = 10.0          # minimum corner radius [m]
BETA_MARGIN = 0.05      # |beta| allowed on the beta*psidot > 0 side [rad]
MAX_EDGE_BETA = 0.06    # triangle edge filter [rad]
MAX_EDGE_PSIDOT = 0.25  # triangle edge filter [rad/s]

# stability screen
STAB_T_FINAL = 5.0      # [s]
STAB_DT = 0.025         # [s]
STAB_DRIFT_TOL = 1e-3   # per-state drift bound (m/s, rad, rad/s)
STAB_BALL = 0.05        # normalized deviation ball of the manifold invariant
STAB_SCALES = (1.0, 0.1, 0.3)  # normalization (v, beta, psidot)


def default_delta_values(step_deg: float = 1.0) -> np.ndarray:
    """Steering sweep grid [-30 deg, 30 deg]."""
    n = int(round(30.0 / step_deg))
    return np.radians(np.arange(-n, n + 1) * step_deg)


def default_lambda_values(step: float = 0.02) -> np.ndarray:
    """Drive slip sweep grid [0, 0.9]."""
    n = int(round(0.9 / step))
    return np.arange(0, n + 1) * step


@dataclass
class EquilibriumPoint:
    """One verified fixed point of the full model."""

    dyn: DynamicState
    inp: ControlInput
    r_c: float                 # v/psidot, signed [m]
    residual: float            # max-abs derivative at the solution
    stable: bool | None = None  # open-loop 5 s rollout tag; None = not screened


@dataclass
class SweepResult:
    points: list[EquilibriumPoint]
    failures: list[tuple[float, float, str]]  # (delta, lambda, reason)
    attempted: int
    fold_flags: list[tuple[float, float, float, float]] = field(default_factory=list)
    # fold flag: (delta, lambda, r_c_prev, r_c) where R_c jumped > 50%
    converged_cells: int = 0  # grid cells with at least one root

    @property
    def convergence_rate(self) -> float:
        return self.converged_cells / self.attempted if self.attempted else 0.0


# ---------------------------------------------------------------------------
# Newton solver

def _residual(z, delta, lam, par, j_z, tt):
    return _derivs_raw(z[0], z[1], z[2], delta, lam, par, j_z, tt)


def solve_equilibrium(inp: ControlInput, params: VehicleParams, tires: TireParams,
                      guess: DynamicState | None = None, *,
                      tol: float = TOL_RESIDUAL, max_iter: int = MAX_ITER,
                      fd_step: float = FD_STEP) -> EquilibriumPoint:
    """Solve the steady-state conditions for fixed (delta, lambda).

    Damped Newton iteration on (v, beta, psidot) with a central-difference
    Jacobian.  Raises DegenerateInputError for (0, 0) inputs (any straight
    state is an equilibrium there) and NoConvergenceError when the residual
    tolerance is not met or the root is unphysical (v <= v_eps).
    """
    if inp.delta == 0.0 and inp.lam == 0.0:
        raise DegenerateInputError("(delta, lambda) = (0, 0) has no isolated equilibrium")

    par = (params.m, params.l_f, params.l_r, params.h, params.wheelbase)
    tt = (tires.b, tires.c, tires.d, tires.e)
    j_z = params.j_z

    if guess is None:
        s = 1.0 if inp.delta >= 0.0 else -1.0
        guesses = [(8.0, -0.1 * s, 0.5 * s), (5.0, -0.35 * s, 1.0 * s),
                   (15.0, -0.05 * s, 0.3 * s), (3.5, -0.02 * s, 0.15 * s)]
    else:
        guesses = [(guess.v, guess.beta, guess.psidot)]

    last_exc = None
    for g in guesses:
        try:
            z, res = _newton(g, inp.delta, inp.lam, par, j_z, tt, tol, max_iter,
                             fd_step, params.v_eps)
        except NoConvergenceError as exc:
            last_exc = exc
            continue
        v, beta, psidot = z
        if abs(psidot) < 1e-9:
            last_exc = NoConvergenceError("converged to a non-turning state")
            continue
        return EquilibriumPoint(DynamicState(v, beta, psidot),
                                ControlInput(inp.delta, inp.lam),
                                v / psidot, res)
    raise last_exc if last_exc is not None else NoConvergenceError("no guess converged")


def _newton(z0, delta, lam, par, j_z, tt, tol, max_iter, fd_step, v_eps):
    z = np.asarray(z0, dtype=float)
    f = np.asarray(_residual(z, delta, lam, par, j_z, tt))
    norm = np.abs(f).max()
    for _ in range(max_iter):
        if norm < tol:
            return (float(z[0]), float(z[1]), float(z[2])), float(norm)
        jac = np.empty((3, 3))
        for k in range(3):
            zp = z.copy()
            zm = z.copy()
            zp[k] += fd_step
            zm[k] -= fd_step
            fp = _residual(zp, delta, lam, par, j_z, tt)
            fm = _residual(zm, delta, lam, par, j_z, tt)
            jac[:, k] = [(fp[i] - fm[i]) / (2.0 * fd_step) for i in range(3)]
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NoConvergenceError(f"singular Jacobian: {exc}") from exc
        # backtracking: keep iterates physical and the residual decreasing
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            zn = z + scale * step
            if zn[0] > v_eps and abs(zn[1]) < 1.4 and abs(zn[2]) < 8.0:
                fn = np.asarray(_residual(zn, delta, lam, par, j_z, tt))
                nn = np.abs(fn).max()
                if nn < norm:
                    break
            scale *= 0.5
        else:
            raise NoConvergenceError("line search stalled")
        z, f, norm = zn, fn, nn
    if norm < tol:
        return (float(z[0]), float(z[1]), float(z[2])), float(norm)
    raise NoConvergenceError(f"residual {norm:.3e} after {max_iter} iterations")


# ---------------------------------------------------------------------------
# sweep with continuation

def sweep_inputs(delta_values, lambda_values, params: VehicleParams,
                 tires: TireParams, *, tol: float = TOL_RESIDUAL,
                 max_iter: int = MAX_ITER, fd_step: float = FD_STEP) -> SweepResult:
    """Solve the equilibrium grid over all (delta, lambda) combinations.

    Continuation: each lambda row is walked from delta = 0 outward in both
    directions, seeding every cell first with the neighbouring solution in the
    walk, then with the same-delta solution of the previous lambda row, then
    with the default guesses.  Failed cells are recorded, not fatal.
    R_c discontinuities (> 50% jumps) along each row are flagged as folds.
    """
    deltas = np.asarray(list(delta_values), dtype=float)
    lams = np.asarray(list(lambda_values), dtype=float)
    if deltas.size == 0 or lams.size == 0:
        raise EmptySweepError("empty sweep range")

    deltas_sorted = np.sort(deltas)
    nonneg = [d for d in deltas_sorted if d >= 0.0]
    neg = [d for d in deltas_sorted if d < 0.0][::-1]  # toward -30 deg

    points: list[EquilibriumPoint] = []
    failures: list[tuple[float, float, str]] = []
    solved: dict[tuple[float, float], EquilibriumPoint] = {}
    chains: list[list[EquilibriumPoint]] = []
    prev_lam = None
    for lam in lams:
        for walk in (nonneg, neg):
            prev_pt = None
            chain: list[EquilibriumPoint] = []
            for delta in walk:
                seeds = []
                if prev_pt is not None:
                    seeds.append(prev_pt.dyn)
                if prev_lam is not None and (delta, prev_lam) in solved:
                    seeds.append(solved[(delta, prev_lam)].dyn)
                seeds.append(None)
                pt = None
                err = None
                for seed in seeds:
                    try:
                        pt = solve_equilibrium(ControlInput(delta, lam), params, tires,
                                               guess=seed, tol=tol, max_iter=max_iter,
                                               fd_step=fd_step)
                        break
                    except DegenerateInputError as exc:
                        err = f"degenerate: {exc}"
                        break
                    except NoConvergenceError as exc:
                        err = str(exc)
                if pt is not None:
                    points.append(pt)
                    solved[(delta, lam)] = pt
                    prev_pt = pt
                    chain.append(pt)
                else:
                    failures.append((float(delta), float(lam), err or "unknown"))
                    prev_pt = None
            chains.append(chain)

        # counter-steer branch: continue the positive-sense solution family
        # into delta < 0 (deep drift holds psidot > 0 with opposite steering);
        # the plain negative walk above only finds the mirrored turning sense
        anchor = solved.get((nonneg[0], lam)) if nonneg else None
        if anchor is not None and neg:
            sense = 1.0 if anchor.dyn.psidot > 0.0 else -1.0
            prev_pt = anchor
            chain = [anchor]
            for delta in neg:
                try:
                    pt = solve_equilibrium(ControlInput(delta, lam), params, tires,
                                           guess=prev_pt.dyn, tol=tol,
                                           max_iter=max_iter, fd_step=fd_step)
                except (DegenerateInputError, NoConvergenceError):
                    break
                if pt.dyn.psidot * sense <= 0.0:
                    break  # jumped to the mirrored branch; walk ended
                points.append(pt)
                prev_pt = pt
                chain.append(pt)
            chains.append(chain)
        prev_lam = lam

    if not points:
        raise EmptySweepError("no sweep cell converged")

    flags = []
    for chain in chains:
        for p0, p1 in zip(chain, chain[1:]):
            if abs(p1.r_c - p0.r_c) > 0.5 * abs(p0.r_c):
                flags.append((p1.inp.delta, p1.inp.lam, p0.r_c, p1.r_c))

    converged_cells = len(solved)
    return SweepResult(points, failures, attempted=deltas.size * lams.size,
                       fold_flags=flags, converged_cells=converged_cells)


# ---------------------------------------------------------------------------
# manifold

@dataclass
class Manifold:
    """Piecewise-linear map (beta, psidot) -> (v, delta, lambda).

    samples: (n, 7) array with columns beta, psidot, v, delta, lambda, r_c,
    stable (1.0 / 0.0).  triangles index rows of samples.
    """

    samples: np.ndarray
    triangles: np.ndarray
    sense: int                      # +1 counter-clockwise, -1 clockwise
    params_hash: str
    r_c_min: float = R_C_MIN
    beta_margin: float = BETA_MARGIN

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=int)
        self._tri = mtri.Triangulation(self.samples[:, 0], self.samples[:, 1],
                                       self.triangles)
        self._finder = self._tri.get_trifinder()
        # per-triangle barycentric transform (2x2 inverses)
        p = self.samples[self.triangles, :2]           # (m, 3, 2)
        t = np.stack([p[:, 0] - p[:, 2], p[:, 1] - p[:, 2]], axis=-1)  # (m, 2, 2)
        self._tinv = np.linalg.inv(t)
        self._p3 = p[:, 2]
        self._snap = {(row[0], row[1]): (row[2], row[3], row[4])
                      for row in self.samples}

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def try_query(self, beta: float, psidot: float):
        """(v, delta, lambda) at a point, or None when outside the domain."""
        hit = self._snap.get((beta, psidot))
        if hit is not None:
            return hit
        t = int(self._finder(np.asarray([beta]), np.asarray([psidot]))[0])
        if t < 0:
            return None
        w12 = self._tinv[t] @ (np.asarray([beta, psidot]) - self._p3[t])
        w = np.asarray([w12[0], w12[1], 1.0 - w12[0] - w12[1]])
        vals = self.samples[self.triangles[t], 2:5]
        v, delta, lam = w @ vals
        return float(v), float(delta), float(lam)

    def query(self, beta: float, psidot: float) -> tuple[float, float, float]:
        """Interpolated (v, delta, lambda); raises OutOfDomainError outside."""
        out = self.try_query(beta, psidot)
        if out is None:
            raise OutOfDomainError(f"({beta}, {psidot}) outside the manifold domain")
        return out

    def query_many(self, beta: np.ndarray, psidot: np.ndarray):
        """Vectorized try_query: ((v, delta, lambda) array, validity mask)."""
        beta = np.asarray(beta, dtype=float)
        psidot = np.asarray(psidot, dtype=float)
        t = self._finder(beta, psidot)
        ok = t >= 0
        vals = np.full((beta.size, 3), np.nan)
        if np.any(ok):
            ti = t[ok]
            pts = np.stack([beta[ok], psidot[ok]], axis=-1) - self._p3[ti]
            w12 = np.einsum("nij,nj->ni", self._tinv[ti], pts)
            w = np.concatenate([w12, 1.0 - w12.sum(axis=1, keepdims=True)], axis=1)
            vals[ok] = np.einsum("ni,nik->nk", w, self.samples[self.triangles[ti], 2:5])
        # exact values at stored sample coordinates
        for i, (bq, pq) in enumerate(zip(beta, psidot)):
            hit = self._snap.get((float(bq), float(pq)))
            if hit is not None:
                vals[i] = hit
                ok[i] = True
        return vals, ok

    def domain_bounds(self):
        """((beta_min, beta_max), (psidot_min, psidot_max)) of the samples."""
        b = self.samples[:, 0]
        p = self.samples[:, 1]
        return (float(b.min()), float(b.max())), (float(p.min()), float(p.max()))

    def mirror(self) -> "Manifold":
        """The opposite turning sense: (beta, psidot, delta) negated."""
        s = self.samples.copy()
        s[:, 0] *= -1.0  # beta
        s[:, 1] *= -1.0  # psidot
        s[:, 3] *= -1.0  # delta
        s[:, 5] *= -1.0  # r_c
        tri = self.triangles[:, ::-1].copy()  # keep orientation after reflection
        return Manifold(s, tri, -self.sense, self.params_hash,
                        self.r_c_min, self.beta_margin)


@dataclass
class ManifoldPair:
    """Both turning senses; dispatches queries on the sign of psidot."""

    ccw: Manifold
    cw: Manifold

    def try_query(self, beta: float, psidot: float):
        if psidot > 0.0:
            return self.ccw.try_query(beta, psidot)
        if psidot < 0.0:
            return self.cw.try_query(beta, psidot)
        return None

    def query_many(self, beta: np.ndarray, psidot: np.ndarray):
        """Vectorized try_query over both senses (psidot = 0 never resolves)."""
        beta = np.asarray(beta, dtype=float)
        psidot = np.asarray(psidot, dtype=float)
        vals = np.full((beta.size, 3), np.nan)
        ok = np.zeros(beta.size, dtype=bool)
        for mani, mask in ((self.ccw, psidot > 0.0), (self.cw, psidot < 0.0)):
            if np.any(mask):
                v, o = mani.query_many(beta[mask], psidot[mask])
                vals[mask] = v
                ok[mask] = o
        return vals, ok

    @property
    def beta_margin(self) -> float:
        return self.ccw.beta_margin

    @property
    def r_c_min(self) -> float:
        return self.ccw.r_c_min

    @classmethod
    def from_ccw(cls, ccw: Manifold) -> "ManifoldPair":
        return cls(ccw, ccw.mirror())


def query(manifold: Manifold, beta: float, psidot: float) -> tuple[float, float, float]:
    """Module-level alias of Manifold.query."""
    return manifold.query(beta, psidot)


def _stability_tag(pt: EquilibriumPoint, params: VehicleParams, tires: TireParams):
    """Open-loop screen: frozen-input 5 s rollout from the fixed point.

    Stable means every state stays within STAB_DRIFT_TOL of the equilibrium
    (tighter than the 0.05 normalized ball, which is implied).
    """
    try:
        traj = rollout_full(pt.dyn, pt.inp, params, tires, STAB_T_FINAL, STAB_DT)
    except Exception:
        return False
    ref = np.asarray([pt.dyn.v, pt.dyn.beta, pt.dyn.psidot])
    drift = np.abs(traj - ref).max(axis=0)
    return bool(np.all(drift < STAB_DRIFT_TOL))


def build_manifold(points, params: VehicleParams, tires: TireParams, *,
                   sense: int = 1, r_c_min: float = R_C_MIN,
                   beta_margin: float = BETA_MARGIN, v_max: float | None = None,
                   max_edge_beta: float = MAX_EDGE_BETA,
                   max_edge_psidot: float = MAX_EDGE_PSIDOT,
                   stability_screen: bool = True) -> Manifold:
    """Filter sweep samples, screen stability, triangulate.

    Domain rules: turning sense psidot*sense > 0; R_c >= r_c_min; the
    beta*psidot > 0 side is dropped except |beta| < beta_margin; v <= v_max.
    Triangles with an edge longer than the max-edge thresholds are removed so
    the interpolant never bridges holes in the sample cloud.
    """
    if v_max is None:
        v_max = params.v_max
    kept: list[EquilibriumPoint] = []
    seen = set()
    for pt in points:
        d = pt.dyn
        if d.psidot * sense <= 0.0:
            continue
        if abs(pt.r_c) < r_c_min:
            continue
        if d.beta * d.psidot > 0.0 and abs(d.beta) >= beta_margin:
            continue
        if d.v > v_max:
            continue
        key = (round(d.beta, 5), round(d.psidot, 5))
        if key in seen:
            continue
        seen.add(key)
        kept.append(pt)
    if len(kept) < 3:
        raise InsufficientSamplesError(f"only {len(kept)} samples after filtering")

    rows = np.empty((len(kept), 7))
    for i, pt in enumerate(kept):
        stable = _stability_tag(pt, params, tires) if stability_screen else True
        rows[i] = (pt.dyn.beta, pt.dyn.psidot, pt.dyn.v, pt.inp.delta, pt.inp.lam,
                   pt.r_c, 1.0 if stable else 0.0)

    try:
        tri = mtri.Triangulation(rows[:, 0], rows[:, 1])
    except (RuntimeError, ValueError) as exc:
        raise InsufficientSamplesError(f"triangulation failed: {exc}") from exc
    t = tri.triangles
    p = rows[t, :2]
    keep = np.ones(t.shape[0], dtype=bool)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        db = np.abs(p[:, a, 0] - p[:, b, 0])
        dp = np.abs(p[:, a, 1] - p[:, b, 1])
        keep &= (db <= max_edge_beta) & (dp <= max_edge_psidot)
    t = t[keep]
    if t.shape[0] == 0:
        raise InsufficientSamplesError("no triangles survived the edge filter")

    return Manifold(rows, t, sense, params_hash(params, tires),
                    r_c_min=r_c_min, beta_margin=beta_margin)


# ---------------------------------------------------------------------------
# persistence

def params_hash(params: VehicleParams, tires: TireParams) -> str:
    """Short hash of all vehicle and tire parameters."""
    items = [f"{k}={v!r}" for k, v in sorted(vars(params).items())]
    items += [f"tire.{k}={v!r}" for k, v in sorted(vars(tires).items())]
    return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]


_MAGIC = "# driftplan-esm 1"


def save_manifold(manifold: Manifold, path) -> None:
    """Self-describing text format; floats at full round-trip precision."""
    lines = [_MAGIC,
             f"# params_hash {manifold.params_hash}",
             f"# sense {'ccw' if manifold.sense > 0 else 'cw'}",
             f"# r_c_min {manifold.r_c_min!r}",
             f"# beta_margin {manifold.beta_margin!r}",
             f"# samples {manifold.n_samples}",
             f"# triangles {manifold.n_triangles}",
             "# columns beta psidot v delta lambda r_c stable"]
    for row in manifold.samples:
        lines.append(" ".join(repr(float(x)) for x in row[:6]) + f" {int(row[6])}")
    lines.append("# end samples")
    for t in manifold.triangles:
        lines.append(f"{t[0]} {t[1]} {t[2]}")
    lines.append("# end triangles")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifold(path, params: VehicleParams | None = None,
                  tires: TireParams | None = None) -> Manifold:
    """Load a manifold file; warn when the stored parameter hash differs from
    the hash of the supplied parameters."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MAGIC:
        raise ManifoldFormatError(f"{path}: not a driftplan manifold file")

    header = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        if lines[i].startswith("# columns"):
            i += 1
            break
        try:
            _, key, val = lines[i].split(" ", 2)
        except ValueError as exc:
            raise ManifoldFormatError(f"{path}: bad header line {i + 1}") from exc
        header[key] = val
        i += 1
    try:
        n_samples = int(header["samples"])
        n_tri = int(header["triangles"])
        sense = {"ccw": 1, "cw": -1}[header["sense"]]
        r_c_min = float(header["r_c_min"])
        beta_margin = float(header["beta_margin"])
        stored_hash = header["params_hash"]
    except (KeyError, ValueError) as exc:
        raise ManifoldFormatError(f"{path}: missing or malformed header field: {exc}") from exc

    if len(lines) < i + n_samples:
        raise ManifoldFormatError(f"{path}: truncated sample block")
    rows = np.empty((n_samples, 7))
    for j in range(n_samples):
        parts = lines[i + j].split()
        if len(parts) != 7:
            raise ManifoldFormatError(f"{path}: bad sample at line {i + j + 1}")
        try:
            rows[j] = [float(p) for p in parts]
        except ValueError as exc:
            raise ManifoldFormatError(
                f"{path}: bad sample at line {i + j + 1}") from exc
    i += n_samples
    if i >= len(lines) or lines[i] != "# end samples":
        raise ManifoldFormatError(f"{path}: sample block not terminated")
    i += 1
    if len(lines) < i + n_tri:
        raise ManifoldFormatError(f"{path}: truncated triangle block")
    tri = np.empty((n_tri, 3), dtype=int)
    for j in range(n_tri):
        parts = lines[i + j].split()
        if len(parts) != 3:
            raise ManifoldFormatError(f"{path}: bad triangle at line {i + j + 1}")
        try:
            tri[j] = [int(p) for p in parts]
        except ValueError as exc:
            raise ManifoldFormatError(
                f"{path}: bad triangle at line {i + j + 1}") from exc

    if params is not None and tires is not None:
        expect = params_hash(params, tires)
        if expect != stored_hash:
            warnings.warn(f"{path}: manifold built with params {stored_hash}, "
                          f"current params hash {expect}", RuntimeWarning,
                          stacklevel=2)
    return Manifold(rows, tri, sense, stored_hash, r_c_min=r_c_min,
                    beta_margin=beta_margin)
