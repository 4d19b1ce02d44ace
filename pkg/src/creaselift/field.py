"""Sinusoidal neural field over lifted coordinates.

The network f_theta maps a positional-encoded lifted point plus the scalar
condition alpha to k basis values. All non-smoothness enters through the
lift; the network itself is infinitely differentiable, so spatial first and
second derivatives follow the chain rule through the lift Jacobian and
Hessians. They are computed exactly by differentiating a local second-order
substitute q(eps) = q0 + J eps + 0.5 eps^T H eps of the lift: at eps = 0 its
value/Jacobian/Hessian match the lift, so forward-mode derivatives of
f(q(eps)) reproduce the chain rule without ever forming the full
lifted-coordinate Hessian of the network.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp

from .lifting import LiftingMap, lift_jet_many, lift_many


@dataclass(frozen=True)
class FieldSpec:
    """Architecture descriptor (hashable; used as a static jit argument)."""

    dimension: int
    lifted: int = 1
    k: int = 4
    width: int = 128
    layers: int = 5          # weight layers total: layers-1 sine + linear head
    omega0: float = 30.0
    n_freq: int = 6
    identity: bool = False   # identity activations (analytic test mode)

    @property
    def encoded_dim(self) -> int:
        if self.identity:
            return self.dimension + self.lifted  # raw input, analytic mode
        return (self.dimension + self.lifted) * (1 + 2 * self.n_freq)

    @property
    def in_dim(self) -> int:
        return self.encoded_dim + 1  # alpha appended un-encoded

    def layer_sizes(self):
        dims = [self.in_dim] + [self.width] * (self.layers - 1) + [self.k]
        return list(zip(dims[:-1], dims[1:]))

    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_sizes())


@dataclass
class FieldNetwork:
    """Trained or fresh network: spec + weights + scene descriptor."""

    spec: FieldSpec
    params: tuple
    meta: dict = field(default_factory=dict)


def init_params(spec: FieldSpec, seed: int) -> tuple:
    """Uniform +/- sqrt(6/fan_in)/omega_layer weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    n_layers = spec.layers
    for i, (fan_in, fan_out) in enumerate(spec.layer_sizes()):
        omega = spec.omega0 if (i == 0 and n_layers > 1) else 1.0
        bound = np.sqrt(6.0 / fan_in) / omega
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params.append((jnp.asarray(W), jnp.zeros(fan_out)))
    return tuple(params)


def init_network(spec: FieldSpec, seed: int, meta=None) -> FieldNetwork:
    return FieldNetwork(spec=spec, params=init_params(spec, seed),
                        meta=dict(meta or {}))


def params_to_flat(params) -> np.ndarray:
    return np.concatenate([np.asarray(a).ravel()
                           for Wb in params for a in Wb])


def flat_to_params(spec: FieldSpec, flat) -> tuple:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != spec.n_params():
        raise ValueError(f"weight count {flat.size} does not match "
                         f"architecture ({spec.n_params()})")
    out = []
    pos = 0
    for fan_in, fan_out in spec.layer_sizes():
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        out.append((jnp.asarray(W), jnp.asarray(b)))
    return tuple(out)


# ---------------------------------------------------------------------------
# pure-jax forward and local jets
# ---------------------------------------------------------------------------

def _encode(q, n_freq):
    freqs = jnp.pi * (2.0 ** jnp.arange(n_freq))
    ang = q[:, None] * freqs[None, :]
    return jnp.concatenate([q, jnp.sin(ang).ravel(), jnp.cos(ang).ravel()])


def _forward(params, spec: FieldSpec, q, alpha):
    feats = q if spec.identity else _encode(q, spec.n_freq)
    h = jnp.concatenate([feats, jnp.atleast_1d(alpha)])
    for i, (W, b) in enumerate(params[:-1]):
        omega = spec.omega0 if i == 0 else 1.0
        pre = omega * (W @ h + b)
        h = pre if spec.identity else jnp.sin(pre)
    W, b = params[-1]
    return W @ h + b


def _local(params, spec, q0, J, H, alpha, eps):
    quad = 0.5 * jnp.einsum("mab,a,b->m", H, eps, eps)
    return _forward(params, spec, q0 + J @ eps + quad, alpha)


def _jet1(params, spec, q0, J, alpha):
    d = J.shape[1]
    fn = lambda e: _forward(params, spec, q0 + J @ e, alpha)
    zero = jnp.zeros(d)
    return fn(zero), jax.jacfwd(fn)(zero)


def _jet2(params, spec, q0, J, H, alpha):
    d = J.shape[1]
    fn = lambda e: _local(params, spec, q0, J, H, alpha, e)
    zero = jnp.zeros(d)
    return fn(zero), jax.jacfwd(fn)(zero), jax.jacfwd(jax.jacfwd(fn))(zero)


@lru_cache(maxsize=None)
def _batch_eval(spec: FieldSpec):
    def f(params, Q, alpha):
        return jax.vmap(lambda q: _forward(params, spec, q, alpha))(Q)
    return jax.jit(f)


@lru_cache(maxsize=None)
def _batch_jet1(spec: FieldSpec):
    def f(params, Q, J, alpha):
        return jax.vmap(lambda q, j: _jet1(params, spec, q, j, alpha))(Q, J)
    return jax.jit(f)


@lru_cache(maxsize=None)
def _batch_jet2(spec: FieldSpec):
    def f(params, Q, J, H, alpha):
        return jax.vmap(
            lambda q, j, h: _jet2(params, spec, q, j, h, alpha))(Q, J, H)
    return jax.jit(f)


# ---------------------------------------------------------------------------
# public evaluation API (numpy in / numpy out)
# ---------------------------------------------------------------------------

def positional_encode(q) -> np.ndarray:
    """Concatenation of q with sin/cos of 2^j pi q, j = 0..5, per coordinate
    (alpha is appended to the network input after encoding, unencoded)."""
    q = jnp.asarray(np.asarray(q, dtype=np.float64).reshape(-1))
    return np.asarray(_encode(q, 6))


def eval_field(net: FieldNetwork, lifted, alpha: float) -> np.ndarray:
    """Forward pass on an already-lifted point: k basis values."""
    q = jnp.asarray(np.asarray(lifted, dtype=np.float64).reshape(-1))
    return np.asarray(_forward(net.params, net.spec, q, float(alpha)))


def _check_map(net: FieldNetwork, m: LiftingMap):
    if m.dimension != net.spec.dimension or m.lifted_count != net.spec.lifted:
        raise ValueError("lifting map does not match network architecture")


def eval_values(net: FieldNetwork, m: LiftingMap, X, alpha: float):
    """Basis values at spatial points: (N, k)."""
    _check_map(net, m)
    L = lift_many(m, X)
    return np.asarray(_batch_eval(net.spec)(net.params, jnp.asarray(L),
                                            float(alpha)))


def eval_basis(net: FieldNetwork, m: LiftingMap, X, alpha: float):
    """Values and spatial gradients at points: ((N, k), (N, k, d))."""
    _check_map(net, m)
    L, J, _ = lift_jet_many(m, X)
    phi, g = _batch_jet1(net.spec)(net.params, jnp.asarray(L),
                                   jnp.asarray(J), float(alpha))
    return np.asarray(phi), np.asarray(g)


def eval_basis_jet2(net: FieldNetwork, m: LiftingMap, X, alpha: float):
    """Values, spatial gradients, and spatial Hessians:
    ((N, k), (N, k, d), (N, k, d, d))."""
    _check_map(net, m)
    L, J, H = lift_jet_many(m, X)
    phi, g, hh = _batch_jet2(net.spec)(net.params, jnp.asarray(L),
                                       jnp.asarray(J), jnp.asarray(H),
                                       float(alpha))
    return np.asarray(phi), np.asarray(g), np.asarray(hh)


def spatial_gradient(net: FieldNetwork, x, m: LiftingMap,
                     alpha: float) -> np.ndarray:
    """Chain-rule spatial gradient (k, d) at a single point."""
    _, g = eval_basis(net, m, np.atleast_2d(x), alpha)
    return g[0]


def spatial_hessian(net: FieldNetwork, x, m: LiftingMap,
                    alpha: float) -> np.ndarray:
    """Chain-rule spatial Hessian (k, d, d) at a single point."""
    _, _, h = eval_basis_jet2(net, m, np.atleast_2d(x), alpha)
    return h[0]


# ---------------------------------------------------------------------------
# canonical losses and parameter gradients
# ---------------------------------------------------------------------------

def gram_deviation(Phi):
    """|| (1/n) Phi^T Phi - I ||_F^2 (works on numpy or jax arrays)."""
    n, k = Phi.shape
    G = (Phi.T @ Phi) / n - np.eye(k)
    return (G * G).sum()


def _alpha_sensitivity(params, spec, Q, alpha_probe):
    """mean_i mean_x (d phi_i / d alpha)^2 at fixed lifted coordinates.

    The probe alpha is drawn over the whole family range, not just the
    trained set: wiggles that vanish at the trained alphas (and so are
    invisible to the main loss) still show a derivative somewhere in range.
    """
    def jvp_one(q):
        f = lambda a: _forward(params, spec, q, a)
        return jax.jvp(f, (alpha_probe,), (jnp.ones_like(alpha_probe),))[1]
    da = jax.vmap(jvp_one)(Q)
    return jnp.mean(jnp.sum(da * da, axis=1))


def _loss_terms(params, spec, kind, Q, J, H, w, alpha, lam,
                lam_alpha=0.0, with_alpha_pen=False, alpha_probe=None):
    if kind == "value":
        phi = jax.vmap(lambda q: _forward(params, spec, q, alpha))(Q)
        return 0.5 * jnp.mean(jnp.sum(phi * phi, axis=1)), 0.0
    if kind == "dirichlet":
        phi, g = jax.vmap(
            lambda q, j: _jet1(params, spec, q, j, alpha))(Q, J)
        main = 0.5 * jnp.mean(w * jnp.sum(g * g, axis=(1, 2)))
    elif kind == "hessian":
        phi, _, hh = jax.vmap(
            lambda q, j, h: _jet2(params, spec, q, j, h, alpha))(Q, J, H)
        main = jnp.mean(jnp.sum(hh * hh, axis=(1, 2, 3)))
    else:
        raise ValueError(f"unsupported loss composition '{kind}'")
    if with_alpha_pen:
        probe = alpha if alpha_probe is None else alpha_probe
        main = main + lam_alpha * _alpha_sensitivity(params, spec, Q, probe)
    pen = gram_deviation(phi)
    return main + lam * pen, pen


@lru_cache(maxsize=None)
def _loss_grad_fn(spec: FieldSpec, kind: str):
    def f(params, Q, J, H, w, alpha, lam):
        (loss, pen), grads = jax.value_and_grad(_loss_terms, has_aux=True)(
            params, spec, kind, Q, J, H, w, alpha, lam)
        return loss, pen, grads
    return jax.jit(f)


def parameter_gradient(net: FieldNetwork, m: LiftingMap, X, alpha: float,
                       kind: str = "value", w=None, lam: float = 0.0):
    """Exact d(loss)/d(theta) for a canonical loss at the given samples.

    kind: "value" (0.5 mean ||phi||^2), "dirichlet" (first spatial
    derivatives + Gram penalty), or "hessian" (second spatial derivatives +
    Gram penalty). Returns (loss, penalty, grads) with grads matching the
    params structure.
    """
    if kind not in ("value", "dirichlet", "hessian"):
        raise ValueError(f"unsupported loss composition '{kind}'")
    _check_map(net, m)
    X = np.atleast_2d(X)
    L, J, H = lift_jet_many(m, X)
    if w is None:
        w = np.ones(X.shape[0])
    w = np.asarray(w, dtype=np.float64)
    if kind == "dirichlet" and np.any(w <= 0):
        raise ValueError("non-positive material weight")
    loss, pen, grads = _loss_grad_fn(net.spec, kind)(
        net.params, jnp.asarray(L), jnp.asarray(J), jnp.asarray(H),
        jnp.asarray(w), float(alpha), float(lam))
    grads_np = tuple((np.asarray(gw), np.asarray(gb)) for gw, gb in grads)
    return float(loss), float(pen), grads_np
