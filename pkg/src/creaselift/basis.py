"""Basis training: weighted Dirichlet or Hessian energy + Gram penalty.

Per epoch: draw alphas (uniform in range or from a discrete set), draw
spatial batches by rejection sampling, evaluate the configured energy plus
the orthonormality penalty, and take one adaptive-moment gradient step.
The penalty couples modes only through the Gram matrix, so the trained
columns span the right space but in an arbitrary rotation;
extract_ordered_modes recovers energy-ordered modes from a small
generalized eigenproblem over that span.
"""

import csv

import numpy as np
from dataclasses import dataclass
from functools import lru_cache

import jax
import jax.numpy as jnp

from . import field as field_mod
from . import oracle
from .domain import BoxDomain, PolygonDomain
from .field import FieldNetwork, FieldSpec, gram_deviation
from .geometry import build_hash, hash_clamped_query_many
from .lifting import InterfaceFamily, LiftingMap, lift_jet_many, lifting_map

# chi-squared critical value, 99 degrees of freedom, p = 0.01 (for the
# 10 x 10 uniformity test)
CHI2_DF99_P01 = 134.642

REDRAW_EPS = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch: int = 4096
    alpha_draws: int = 8
    lr: float = 1e-4
    lr_drop: float = 0.1       # learning-rate multiplier at 80% of epochs
    lam_g: float = 10.0
    lam_alpha: float = 0.0     # smoothness in the alpha input (family scenes)
    loss: str = "dirichlet"    # or "hessian"
    seed: int = 0
    alphas: tuple | None = None  # discrete alpha set; None samples uniformly

    def __post_init__(self):
        if min(self.epochs, self.batch, self.alpha_draws) <= 0:
            raise ValueError("epochs, batch, alpha_draws must be positive")
        if self.lr <= 0 or self.lam_g < 0 or self.lam_alpha < 0:
            raise ValueError("bad learning rate or penalty weight")
        if self.loss not in ("dirichlet", "hessian"):
            raise ValueError(f"unknown loss kind '{self.loss}'")


@dataclass(frozen=True)
class MaterialField:
    """Piecewise-constant positive weight, keyed by interface side."""

    kind: str                  # "uniform" | "interface_side"
    w_uniform: float = 1.0
    w_neg: float = 1.0
    w_pos: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "interface_side"):
            raise ValueError(f"unknown material kind '{self.kind}'")
        if min(self.w_uniform, self.w_neg, self.w_pos) <= 0:
            raise ValueError("material weights must be positive")

    def weights(self, family: InterfaceFamily, X, alpha: float) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.kind == "uniform":
            return np.full(X.shape[0], self.w_uniform)
        side = family.side(X, alpha)
        return np.where(side >= 0, self.w_pos, self.w_neg)


@dataclass(frozen=True)
class TrainProblem:
    """Everything training needs about a scene, network aside."""

    domain: BoxDomain | PolygonDomain
    family: InterfaceFamily
    s: float
    lift_mode: str = "gradient"
    cut: object = None              # InterfaceMesh for combined mode
    material: MaterialField = MaterialField(kind="uniform")

    def lift_map(self, alpha: float) -> LiftingMap:
        return lifting_map(self.family.mesh(alpha), self.s,
                           mode=self.lift_mode, cut=self.cut)


@dataclass
class BasisSet:
    """Network outputs frozen at sample points for one alpha."""

    points: np.ndarray   # (N, d)
    phi: np.ndarray      # (N, k)
    grads: np.ndarray    # (N, k, d)
    alpha: float

    def gram(self) -> np.ndarray:
        return self.phi.T @ self.phi / self.phi.shape[0]


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_domain(domain, m: LiftingMap | None, n: int, rng) -> np.ndarray:
    """n uniform points in the domain, redrawing points within 1e-9 of the
    interface. rng is a seed or a numpy Generator."""
    rng = np.random.default_rng(rng) if not isinstance(
        rng, np.random.Generator) else rng
    lo, hi = domain.bbox()
    cut_grid = None
    if m is not None and m.cut is not None:
        cut_grid = build_hash(m.cut, m.s)
    out = np.empty((n, lo.shape[0]))
    have = 0
    proposed = 0
    while have < n:
        m_draw = max(n - have, 64)
        X = rng.uniform(lo, hi, size=(m_draw, lo.shape[0]))
        proposed += m_draw
        keep = domain.contains(X)
        if m is not None:
            _, dist, *_ = hash_clamped_query_many(m.grid, m.interface, X)
            keep &= ~(dist < REDRAW_EPS)
            if cut_grid is not None:
                _, dc, *_ = hash_clamped_query_many(cut_grid, m.cut, X)
                keep &= ~(dc < REDRAW_EPS)
        X = X[keep]
        take = min(n - have, X.shape[0])
        out[have:have + take] = X[:take]
        have += take
        if proposed >= 10000 and have / proposed < 0.01:
            raise ValueError("degenerate occupancy")
    return out


# ---------------------------------------------------------------------------
# losses (public operator forms)
# ---------------------------------------------------------------------------

def gram_penalty(phi_batch) -> float:
    """|| (1/n) Phi^T Phi - I ||_F^2 over a batch of basis values."""
    phi_batch = np.atleast_2d(phi_batch)
    n, k = phi_batch.shape
    if n < k:
        raise ValueError("need at least k samples for the Gram estimate")
    return float(gram_deviation(phi_batch))


def dirichlet_loss(net: FieldNetwork, m: LiftingMap, samples, w,
                   alpha: float, lam_g: float = 10.0) -> float:
    """0.5 mean w |grad phi|^2 summed over modes, plus lam_g Gram penalty."""
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("non-positive material weight")
    loss, _, _ = field_mod.parameter_gradient(net, m, samples, alpha,
                                              kind="dirichlet", w=w,
                                              lam=lam_g)
    return loss


def hessian_energy_loss(net: FieldNetwork, m: LiftingMap, samples,
                        alpha: float, lam_g: float = 10.0) -> float:
    """mean ||hess phi||_F^2 summed over modes, plus lam_g Gram penalty."""
    samples = np.atleast_2d(samples)
    loss, _, _ = field_mod.parameter_gradient(net, m, samples, alpha,
                                              kind="hessian", lam=lam_g)
    return loss


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _adam_init(params):
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return zeros, jax.tree_util.tree_map(jnp.zeros_like, params)


@lru_cache(maxsize=None)
def _train_step_fn(spec: FieldSpec, kind: str, with_alpha_pen: bool):
    def epoch_loss(params, Q, J, H, w, alphas, probes, lam, lam_alpha):
        def per_draw(q, j, h, ww, a, ap):
            return field_mod._loss_terms(params, spec, kind, q, j, h, ww,
                                         a, lam, lam_alpha, with_alpha_pen,
                                         ap)
        losses, pens = jax.vmap(per_draw)(Q, J, H, w, alphas, probes)
        return jnp.mean(losses), jnp.mean(pens)

    def step(params, mom, vel, t, Q, J, H, w, alphas, probes, lam,
             lam_alpha, lr):
        (loss, pen), g = jax.value_and_grad(epoch_loss, has_aux=True)(
            params, Q, J, H, w, alphas, probes, lam, lam_alpha)
        b1, b2, eps = 0.9, 0.999, 1e-8
        mom = jax.tree_util.tree_map(
            lambda m_, g_: b1 * m_ + (1 - b1) * g_, mom, g)
        vel = jax.tree_util.tree_map(
            lambda v_, g_: b2 * v_ + (1 - b2) * g_ * g_, vel, g)
        mhat = jax.tree_util.tree_map(lambda m_: m_ / (1 - b1 ** t), mom)
        vhat = jax.tree_util.tree_map(lambda v_: v_ / (1 - b2 ** t), vel)
        params = jax.tree_util.tree_map(
            lambda p, m_, v_: p - lr * m_ / (jnp.sqrt(v_) + eps),
            params, mhat, vhat)
        return params, mom, vel, loss, pen

    return jax.jit(step)


def _epoch_batch(problem: TrainProblem, config: TrainConfig, rng):
    """Per-epoch arrays: Q (A,nb,m), J, H, w (A,nb), alphas and smoothness
    probe alphas (A,)."""
    draws = config.alpha_draws
    nb = max(config.batch // draws, 2)
    lo, hi = problem.family.alpha_range
    if config.alphas is not None:
        alphas = rng.choice(np.asarray(config.alphas, dtype=np.float64),
                            size=draws)
    elif hi > lo:
        alphas = rng.uniform(lo, hi, size=draws)
    else:
        alphas = np.full(draws, lo)
    # the alpha-smoothness penalty probes the whole range regardless of the
    # discrete training set
    probes = rng.uniform(lo, hi, size=draws) if hi > lo \
        else np.full(draws, lo)
    Qs, Js, Hs, ws = [], [], [], []
    for a in alphas:
        m = problem.lift_map(float(a))
        X = sample_domain(problem.domain, m, nb, rng)
        L, J, H = lift_jet_many(m, X)
        Qs.append(L)
        Js.append(J)
        Hs.append(H)
        ws.append(problem.material.weights(problem.family, X, float(a)))
    return (np.stack(Qs), np.stack(Js), np.stack(Hs), np.stack(ws),
            alphas.astype(np.float64), probes.astype(np.float64))


def train_basis(problem: TrainProblem, net: FieldNetwork,
                config: TrainConfig, trace_path=None, log_every: int = 0):
    """Optimize the network in place-of (returns a new FieldNetwork) and the
    per-epoch (epoch, loss, gram_penalty) trace. Aborts on NaN loss."""
    rng = np.random.default_rng(config.seed)
    step = _train_step_fn(net.spec, config.loss, config.lam_alpha > 0)
    params = net.params
    mom, vel = _adam_init(params)
    drop_at = int(0.8 * config.epochs)
    trace = []
    for epoch in range(config.epochs):
        Q, J, H, w, alphas, probes = _epoch_batch(problem, config, rng)
        lr = config.lr * (config.lr_drop if epoch >= drop_at else 1.0)
        params, mom, vel, loss, pen = step(
            params, mom, vel, float(epoch + 1), jnp.asarray(Q),
            jnp.asarray(J), jnp.asarray(H), jnp.asarray(w),
            jnp.asarray(alphas), jnp.asarray(probes), config.lam_g,
            config.lam_alpha, lr)
        loss = float(loss)
        pen = float(pen)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch} (alphas {alphas})")
        trace.append((epoch, loss, pen))
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch:5d} loss {loss:.6e} gram {pen:.3e}")
    meta = dict(net.meta)
    meta.update(loss=config.loss, lam_g=config.lam_g,
                lam_alpha=config.lam_alpha, s=problem.s,
                lift_mode=problem.lift_mode, family=problem.family.kind,
                alpha_range=list(problem.family.alpha_range),
                seed=config.seed)
    out = FieldNetwork(spec=net.spec, params=params, meta=meta)
    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "loss", "gram_penalty"])
            wr.writerows(trace)
    return out, trace


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def infer_basis(net: FieldNetwork, m: LiftingMap, points,
                alpha: float) -> BasisSet:
    """Evaluate phi and grad phi under the alpha-specific lift. The result
    is reusable across time steps until alpha or the interface changes."""
    meta_s = net.meta.get("s")
    if meta_s is not None and abs(meta_s - m.s) > 1e-12:
        raise ValueError("checkpoint clamp threshold does not match the map")
    meta_mode = net.meta.get("lift_mode")
    if meta_mode is not None and meta_mode != m.mode:
        raise ValueError("checkpoint lift mode does not match the map")
    points = np.atleast_2d(points)
    phi, grads = field_mod.eval_basis(net, m, points, alpha)
    return BasisSet(points=points, phi=phi, grads=grads, alpha=float(alpha))


def extract_ordered_modes(phi, grads, w=None):
    """Energy-ordered modes from the trained span.

    Solves the k x k generalized eigenproblem of the restricted weighted
    Dirichlet form against the Gram matrix. Returns (energies ascending,
    coefficient columns V, mode values phi @ V); mode columns are normalized
    to unit mean square.
    """
    phi = np.asarray(phi)
    grads = np.asarray(grads)
    n = phi.shape[0]
    if w is None:
        w = np.ones(n)
    A = np.einsum("nia,n,nja->ij", grads, w, grads) / n
    B = phi.T @ phi / n
    wB, QB = oracle.jacobi_eigh(B)
    if wB.min() <= 1e-10:
        raise ValueError("degenerate Gram matrix; training failed")
    Bmh = QB @ np.diag(wB ** -0.5) @ QB.T
    S = Bmh @ A @ Bmh
    lam, Y = oracle.jacobi_eigh(0.5 * (S + S.T))
    V = Bmh @ Y
    return lam, V, phi @ V
