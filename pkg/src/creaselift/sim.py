"""Reduced-space elastodynamics on a trained lifted basis.

Each basis function carries an affine block z_j in R^{d x (d+1)}; a material
point x is displaced by u(x) = sum_j phi_j(x) * (z_j @ [x; 1]). Implicit time
stepping minimizes

    f(z) = 1/2 ||z - (2 z_t - z_{t-1})||^2 + h^2 (elastic + external)

by gradient descent with a fixed iteration cap, trial step 1.0, and step
halving on objective increase, so accepted iterates never increase f. Elastic
energy is stable neo-Hookean over Monte-Carlo cubature, with a large finite
barrier past inversion so the descent survives det F <= 0.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .basis import TrainProblem, infer_basis, sample_domain
from .kernels.common import DET_BARRIER, DET_EPS
from .lifting import fit_alpha

_log = logging.getLogger("creaselift.sim")

GRAD_TOL = 1e-13


def lame_parameters(young: float, poisson: float) -> tuple[float, float]:
    """First and second Lame parameters from Young's modulus and Poisson
    ratio."""
    if young <= 0:
        raise ValueError("Young's modulus must be positive")
    if not -1.0 < poisson < 0.5:
        raise ValueError("Poisson ratio must lie in (-1, 0.5)")
    mu = young / (2.0 * (1.0 + poisson))
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    return mu, lam


# ---------------------------------------------------------------------------
# state, cubature, handles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedState:
    """Current and previous reduced coordinates plus the step size."""

    z: np.ndarray        # (k, d, d+1)
    z_prev: np.ndarray   # (k, d, d+1)
    h: float
    step_index: int = 0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        zp = np.asarray(self.z_prev, dtype=np.float64)
        if z.ndim != 3 or z.shape[2] != z.shape[1] + 1:
            raise ValueError("reduced coordinates must have shape (k, d, d+1)")
        if zp.shape != z.shape:
            raise ValueError("current and previous coordinates differ in shape")
        if not (np.isfinite(z).all() and np.isfinite(zp).all()):
            raise ValueError("reduced coordinates must be finite")
        if self.h <= 0:
            raise ValueError("step size must be positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "z_prev", zp)

    @classmethod
    def rest(cls, k: int, d: int, h: float) -> "ReducedState":
        return cls(z=np.zeros((k, d, d + 1)), z_prev=np.zeros((k, d, d + 1)),
                   h=h)

    @property
    def k(self) -> int:
        return self.z.shape[0]

    @property
    def dimension(self) -> int:
        return self.z.shape[1]

    def advanced(self, z_new: np.ndarray) -> "ReducedState":
        return ReducedState(z=z_new, z_prev=self.z, h=self.h,
                            step_index=self.step_index + 1)


@dataclass(frozen=True)
class CubatureSet:
    """Basis and material data frozen at Monte-Carlo sample points.

    Rebuild phi/grads/w (keeping the points) whenever alpha or the interface
    changes; the volume weight is measure/N per point.
    """

    points: np.ndarray   # (n, d)
    vol: np.ndarray      # (n,)
    w: np.ndarray        # (n,)
    phi: np.ndarray      # (n, k)
    grads: np.ndarray    # (n, k, d)
    alpha: float

    def __post_init__(self):
        n = self.points.shape[0]
        if n == 0:
            raise ValueError("cubature needs at least one point")
        for name in ("vol", "w", "phi", "grads"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"cubature field '{name}' length mismatch")
        object.__setattr__(
            self, "xhat",
            np.concatenate([self.points, np.ones((n, 1))], axis=1))

    @property
    def k(self) -> int:
        return self.phi.shape[1]


def build_cubature(problem: TrainProblem, net, alpha: float, n: int,
                   rng) -> CubatureSet:
    """Sample n uniform cubature points and evaluate the basis at alpha."""
    m = problem.lift_map(alpha)
    points = sample_domain(problem.domain, m, n, rng)
    vol = np.full(n, problem.domain.measure / n)
    return _evaluated_cubature(problem, net, alpha, points, vol)


def refresh_cubature(cub: CubatureSet, problem: TrainProblem, net,
                     alpha: float) -> CubatureSet:
    """Re-infer basis values and material weights at the existing points."""
    return _evaluated_cubature(problem, net, alpha, cub.points, cub.vol)


def _evaluated_cubature(problem, net, alpha, points, vol) -> CubatureSet:
    m = problem.lift_map(alpha)
    bs = infer_basis(net, m, points, alpha)
    w = problem.material.weights(problem.family, points, alpha)
    return CubatureSet(points=points, vol=vol, w=w, phi=bs.phi,
                       grads=bs.grads, alpha=float(alpha))


HANDLE_KINDS = ("pin", "pair", "gravity")


@dataclass
class Handle:
    """External load applied to the reduced system.

    pin: spring of given stiffness from the material point points[0] to the
    mutable world-space target. pair: spring between the deformed images of
    points[0] and points[1] with rest length `rest`. gravity: body force;
    `target` holds the acceleration vector and `stiffness` the mass density.
    """

    kind: str
    points: np.ndarray
    stiffness: float
    target: np.ndarray
    rest: float = 0.0

    def __post_init__(self):
        if self.kind not in HANDLE_KINDS:
            raise ValueError(f"unknown handle kind '{self.kind}'")
        if self.stiffness < 0:
            raise ValueError("handle stiffness must be non-negative")
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.target = np.asarray(self.target, dtype=np.float64)
        need = {"pin": 1, "pair": 2, "gravity": 0}[self.kind]
        if need and self.points.shape[0] != need:
            raise ValueError(f"{self.kind} handle needs {need} anchor(s)")
        if self.rest < 0:
            raise ValueError("rest length must be non-negative")


def pin_handle(point, target, stiffness: float) -> Handle:
    return Handle(kind="pin", points=np.atleast_2d(point),
                  stiffness=stiffness, target=np.asarray(target, float))


def pair_handle(p, q, stiffness: float, rest: float | None = None) -> Handle:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if rest is None:
        rest = float(np.linalg.norm(p - q))
    return Handle(kind="pair", points=np.stack([p, q]), stiffness=stiffness,
                  target=np.zeros(p.shape[0]), rest=rest)


def gravity_handle(g, density: float = 1.0) -> Handle:
    g = np.asarray(g, float)
    return Handle(kind="gravity", points=np.zeros((0, g.shape[0])),
                  stiffness=density, target=g)


# ---------------------------------------------------------------------------
# kinematics and energy
# ---------------------------------------------------------------------------

def _homogeneous(x: np.ndarray) -> np.ndarray:
    if x.ndim == 1:
        return np.append(x, 1.0)
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def displacement(z: np.ndarray, phi: np.ndarray, x) -> np.ndarray:
    """u(x) = sum_j phi_j (z_j @ [x; 1]); accepts one point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    xh = _homogeneous(x)
    if x.ndim == 1:
        return np.einsum("j,jab,b->a", phi, z, xh)
    return np.einsum("nj,jab,nb->na", phi, z, xh)


def deformation_gradient(z: np.ndarray, phi: np.ndarray, grads: np.ndarray,
                         x) -> np.ndarray:
    """F = I + sum_j [(z_j x^) grad phi_j^T + phi_j z_j[:, :d]] at one point."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    xh = _homogeneous(x)
    y = np.einsum("jab,b->ja", z, xh)
    return (np.eye(d) + np.einsum("ja,jc->ac", y, grads)
            + np.einsum("j,jac->ac", phi, z[:, :, :d]))


def elastic_energy_density(F, w: float, mu: float, lam: float) -> float:
    """Stable neo-Hookean density scaled by the material weight w.

    Past inversion (det F <= DET_EPS) returns a large finite barrier so a
    line-search-free descent can recover, and logs a warning.
    """
    F = np.asarray(F, dtype=np.float64)
    d = F.shape[0]
    J = float(np.linalg.det(F))
    if J <= DET_EPS:
        _log.warning("inverted element (det F = %.3e); barrier energy", J)
        return float(w * DET_BARRIER * (1.0 + (DET_EPS - J)))
    lnj = math.log(J)
    return float(w * (0.5 * mu * ((F * F).sum() - d) - mu * lnj
                      + 0.5 * lam * lnj * lnj))


def _external_energy_grad(z, handles, anchor_phi, anchor_xhat, grav_moment):
    """Energy, dE/dz, and a pre-cancellation magnitude of all handles.

    anchor_phi/anchor_xhat align with handles (None entries for gravity);
    grav_moment is sum_i vol phi xhat. The magnitude bounds the intermediate
    terms the energy is assembled from, for rounding-floor estimates.
    """
    k, d, _ = z.shape
    energy = 0.0
    magnitude = 0.0
    grad = np.zeros_like(z)
    for hdl, aphi, axhat in zip(handles, anchor_phi, anchor_xhat):
        if hdl.stiffness == 0.0:
            continue
        if hdl.kind == "gravity":
            g = hdl.target
            lift = np.einsum("jab,jb->a", z, grav_moment)
            energy -= hdl.stiffness * float(g @ lift)
            magnitude += hdl.stiffness * float(
                np.abs(g) @ np.einsum("jab,jb->a", np.abs(z),
                                      np.abs(grav_moment)))
            grad -= hdl.stiffness * np.einsum("a,jb->jab", g, grav_moment)
            continue
        u = np.einsum("nj,jab,nb->na", aphi, z, axhat)
        world = hdl.points + u
        if hdl.kind == "pin":
            r = world[0] - hdl.target
            energy += 0.5 * hdl.stiffness * float(r @ r)
            span = float(np.linalg.norm(world[0]) + np.linalg.norm(hdl.target))
            magnitude += 0.5 * hdl.stiffness * span * span
            grad += hdl.stiffness * np.einsum(
                "a,j,b->jab", r, aphi[0], axhat[0])
        else:
            r = world[0] - world[1]
            length = float(np.linalg.norm(r))
            stretch = length - hdl.rest
            energy += 0.5 * hdl.stiffness * stretch * stretch
            span = length + hdl.rest
            magnitude += 0.5 * hdl.stiffness * span * span
            if length > 1e-12:
                dr = hdl.stiffness * stretch * r / length
                diff = (aphi[0][:, None] * axhat[0][None, :]
                        - aphi[1][:, None] * axhat[1][None, :])
                grad += np.einsum("a,jb->jab", dr, diff)
    return energy, grad, magnitude


def _objective(z, zhat, h, cub, mu, lam, handles, anchor_phi, anchor_xhat,
               grav_moment):
    e_el, g_el, min_j = kernels.reduced_elastic(
        cub.phi, cub.grads, cub.xhat, cub.w, cub.vol, z, mu, lam)
    e_ex, g_ex, mag_ex = _external_energy_grad(z, handles, anchor_phi,
                                               anchor_xhat, grav_moment)
    diff = z - zhat
    inertia = 0.5 * float((diff * diff).sum())
    f = inertia + h * h * (e_el + e_ex)
    g = diff + h * h * (g_el + g_ex)
    # magnitude of the terms f is assembled from; the rounding floor of f is
    # eps * scale, not eps * |f| (the density cancels O(mu + lam) internally,
    # springs cancel O(stiffness * span^2))
    scale = inertia + h * h * (abs(e_el) + mag_ex + mu + abs(lam))
    return f, g, min_j, scale


# ---------------------------------------------------------------------------
# implicit step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepReport:
    iterations: int
    halvings: int
    objective: float
    initial_objective: float
    aborted: bool
    barrier_hit: bool

    @property
    def note(self) -> str:
        parts = []
        if self.aborted:
            parts.append("inner solve aborted")
        if self.barrier_hit:
            parts.append("inversion barrier active")
        return "; ".join(parts)


def minimize_incremental(z0, zhat, h, cub, mu, lam, handles=(),
                         anchor_phi=(), anchor_xhat=(), grav_moment=None,
                         iterations: int = 64, max_halvings: int = 8):
    """Gradient descent on the incremental objective from z0.

    Trial step 1.0, halved up to max_halvings times while the objective
    would increase; if even the smallest step increases it, the step aborts
    at the best iterate with a logged diagnostic.
    """
    if grav_moment is None:
        grav_moment = np.zeros((z0.shape[0], z0.shape[1] + 1))
    args = (zhat, h, cub, mu, lam, handles, anchor_phi, anchor_xhat,
            grav_moment)
    z = z0.copy()
    f, g, min_j, scale = _objective(z, *args)
    f0 = f
    barrier = min_j <= DET_EPS
    aborted = False
    halvings = 0
    it = 0
    for it in range(1, iterations + 1):
        if np.abs(g).max() < GRAD_TOL:
            it -= 1
            break
        step = 1.0
        accepted = False
        best_rise = np.inf
        for attempt in range(max_halvings + 1):
            trial = z - step * g
            ft, gt, mj, _ = _objective(trial, *args)
            if ft <= f:
                accepted = True
                halvings += attempt
                break
            best_rise = min(best_rise, ft - f)
            step *= 0.5
        if not accepted:
            noise = 4096.0 * np.finfo(np.float64).eps * max(scale, 1e-30)
            if best_rise <= noise:
                # every trial rise is below the rounding floor: converged
                break
            aborted = True
            # normal near stiff equilibria; StepReport.aborted carries it
            _log.debug(
                "inner solve aborted at iteration %d: objective would "
                "increase even at step %.3e", it, step)
            break
        z, f, g = trial, ft, gt
        barrier = barrier or mj <= DET_EPS
    if barrier:
        _log.warning("inversion barrier was active during the step")
    return z, StepReport(iterations=it, halvings=halvings, objective=f,
                         initial_objective=f0, aborted=aborted,
                         barrier_hit=barrier)


def step(state: ReducedState, cub: CubatureSet, mu: float, lam: float,
         handles=(), anchor_phi=(), anchor_xhat=(), grav_moment=None,
         iterations: int = 64, max_halvings: int = 8):
    """One implicit step; returns (new state, report)."""
    zhat = 2.0 * state.z - state.z_prev
    z_new, report = minimize_incremental(
        state.z, zhat, state.h, cub, mu, lam, handles, anchor_phi,
        anchor_xhat, grav_moment, iterations=iterations,
        max_halvings=max_halvings)
    return state.advanced(z_new), report


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    step: int
    alpha: float
    z: np.ndarray
    tracers: np.ndarray   # (t, d) world positions
    note: str = ""


class Simulation:
    """Owns all mutable simulation state.

    External edits go through queue_* methods and are drained between steps;
    an alpha or interface edit re-infers the basis at the existing cubature
    points while the reduced coordinates carry over unchanged.
    """

    def __init__(self, problem: TrainProblem, net, alpha: float, h: float,
                 n_cubature: int = 1024, seed: int = 0, handles=(),
                 young: float = 1.0, poisson: float = 0.3, tracers=None,
                 inner_iterations: int = 64, max_halvings: int = 8):
        problem.family.check(alpha)
        self.problem = problem
        self.net = net
        self.alpha = float(alpha)
        self.mu, self.lam = lame_parameters(young, poisson)
        self.handles = list(handles)
        self.inner_iterations = inner_iterations
        self.max_halvings = max_halvings
        self._rng = np.random.default_rng(seed)
        self.cubature = build_cubature(problem, net, self.alpha, n_cubature,
                                       self._rng)
        d = self.cubature.points.shape[1]
        self.tracers = (np.zeros((0, d)) if tracers is None
                        else np.atleast_2d(np.asarray(tracers, float)))
        self.state = ReducedState.rest(self.cubature.k, d, h)
        self._edits = deque()
        self.last_report: StepReport | None = None
        self.out_of_family = False
        self._refresh_anchors()

    # -- basis refresh ----------------------------------------------------

    def _refresh_anchors(self):
        m = self.problem.lift_map(self.alpha)
        self._anchor_phi = []
        self._anchor_xhat = []
        for hdl in self.handles:
            if hdl.kind == "gravity" or hdl.points.shape[0] == 0:
                self._anchor_phi.append(None)
                self._anchor_xhat.append(None)
                continue
            bs = infer_basis(self.net, m, hdl.points, self.alpha)
            self._anchor_phi.append(bs.phi)
            self._anchor_xhat.append(_homogeneous(hdl.points))
        if self.tracers.shape[0]:
            bs = infer_basis(self.net, m, self.tracers, self.alpha)
            self._tracer_phi = bs.phi
        else:
            self._tracer_phi = np.zeros((0, self.cubature.k))
        cub = self.cubature
        self._grav_moment = np.einsum("n,nj,nb->jb", cub.vol, cub.phi,
                                      cub.xhat)

    def _refresh_basis(self):
        self.cubature = refresh_cubature(self.cubature, self.problem,
                                         self.net, self.alpha)
        self._refresh_anchors()

    # -- edit queue --------------------------------------------------------

    def queue_edit(self, edit):
        """Queue a callable applied between steps; it may mutate handles or
        return a new alpha (float) to trigger a basis refresh."""
        self._edits.append(edit)

    def queue_set_alpha(self, alpha: float):
        self.queue_edit(lambda sim: float(alpha))

    def queue_move_handle(self, index: int, target):
        target = np.asarray(target, dtype=np.float64)

        def apply(sim):
            sim.handles[index].target = target
            return None

        self.queue_edit(apply)

    def queue_set_crease(self, p0, p1):
        p0 = np.asarray(p0, dtype=np.float64)
        p1 = np.asarray(p1, dtype=np.float64)

        def apply(sim):
            alpha, warn = fit_alpha(sim.problem.family, p0, p1)
            sim.out_of_family = warn
            return alpha

        self.queue_edit(apply)

    def apply_pending_edits(self) -> bool:
        """Drain the queue; returns True when the basis was re-inferred."""
        new_alpha = None
        while self._edits:
            edit = self._edits.popleft()
            result = edit(self)
            if result is not None:
                new_alpha = float(result)
        if new_alpha is not None and new_alpha != self.alpha:
            self.problem.family.check(new_alpha)
            self.alpha = new_alpha
            self._refresh_basis()
            return True
        return False

    # -- stepping ----------------------------------------------------------

    def current_frame(self) -> Frame:
        note = "" if self.last_report is None else self.last_report.note
        return Frame(step=self.state.step_index, alpha=self.alpha,
                     z=self.state.z.copy(), tracers=self.tracer_positions(),
                     note=note)

    def tracer_positions(self) -> np.ndarray:
        if self.tracers.shape[0] == 0:
            return self.tracers.copy()
        u = displacement(self.state.z, self._tracer_phi, self.tracers)
        return self.tracers + u

    def step(self) -> Frame:
        self.apply_pending_edits()
        self.state, self.last_report = step(
            self.state, self.cubature, self.mu, self.lam, self.handles,
            self._anchor_phi, self._anchor_xhat, self._grav_moment,
            iterations=self.inner_iterations,
            max_halvings=self.max_halvings)
        return self.current_frame()

    def run(self, steps: int) -> list[Frame]:
        return [self.step() for _ in range(steps)]


def mean_displacement(sim: Simulation) -> np.ndarray:
    """Mean displacement over the cubature points at the current state."""
    u = displacement(sim.state.z, sim.cubature.phi, sim.cubature.points)
    return u.mean(axis=0)


def displacement_objective(sim_factory, steps: int):
    """J(alpha) = ||mean final displacement||^2 after `steps` steps."""

    def evaluate(alpha: float) -> float:
        sim = sim_factory(alpha)
        sim.run(steps)
        u = mean_displacement(sim)
        return float(u @ u)

    return evaluate


# ---------------------------------------------------------------------------
# shape optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeOptResult:
    alpha: float
    objective: float
    trace: tuple          # ((alpha, J) per evaluation, in order)
    aborted: bool = False


def optimize_shape(evaluate, alpha0: float, alpha_range, iterations: int = 10,
                   fd_step: float = 0.02, first_move: float | None = None):
    """Projected gradient ascent on J(alpha) with central differences.

    evaluate(alpha) -> J. Central differences need fd_step of margin inside
    alpha_range. A failing evaluation shrinks fd_step once; a second failure
    aborts with the best alpha seen so far. Returns the best-seen alpha.
    """
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    delta = float(fd_step)
    if delta <= 0 or hi - lo <= 2 * delta:
        raise ValueError("fd_step leaves no room inside the alpha range")
    if not lo + delta <= alpha0 <= hi - delta:
        raise ValueError("alpha0 too close to the range ends for central "
                         "differences")
    if first_move is None:
        first_move = 0.25 * (hi - lo)

    trace = []
    shrunk = False

    def probe(a):
        nonlocal delta, shrunk
        try:
            val = float(evaluate(a))
        except Exception:
            if shrunk:
                raise
            shrunk = True
            delta *= 0.5
            val = float(evaluate(a))
        trace.append((a, val))
        return val

    def clip(a):
        return min(max(a, lo + delta), hi - delta)

    alpha = float(alpha0)
    best_alpha, best_j = alpha, -math.inf
    try:
        best_j = probe(alpha)
        current_j = best_j
        t = None
        for _ in range(iterations):
            jp = probe(clip(alpha + delta))
            jm = probe(clip(alpha - delta))
            if jp > best_j:
                best_alpha, best_j = clip(alpha + delta), jp
            if jm > best_j:
                best_alpha, best_j = clip(alpha - delta), jm
            grad = (jp - jm) / (2.0 * delta)
            if grad == 0.0:
                break
            if t is None:
                t = first_move / abs(grad)
                t_max = 4.0 * t
            cand = clip(alpha + t * grad)
            if cand == alpha:
                break
            j_cand = probe(cand)
            if j_cand > best_j:
                best_alpha, best_j = cand, j_cand
            if j_cand >= current_j:
                alpha, current_j = cand, j_cand
                t = min(1.5 * t, t_max)
            else:
                t *= 0.5
    except Exception:
        _log.warning("shape optimization aborted after repeated "
                     "evaluation failure")
        return ShapeOptResult(alpha=best_alpha, objective=best_j,
                              trace=tuple(trace), aborted=True)
    return ShapeOptResult(alpha=best_alpha, objective=best_j,
                          trace=tuple(trace))
