"""End-to-end acceptance gates.

Each test checks one shipping criterion at its stated tolerance and prints a
single PASS/FAIL line with the measured numbers. Trained networks come from
the session cache in conftest, so a warm run only evaluates.
"""

import time

import numpy as np
import pytest

from conftest import CACHE, constant_twin, trained_network
from creaselift import basis, bench, field, oracle, sim
from creaselift.field import FieldNetwork, flat_to_params, params_to_flat
from creaselift.geometry import closest_point_many
from creaselift.service import LineClient, SimulationService


def report(name: str, ok: bool, detail: str):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# -- shared evaluation helpers ---------------------------------------------------

def ordered_modes(net, sc, alpha, n=2048, seed=99, use_material=False):
    problem = sc.train_problem()
    m = problem.lift_map(alpha)
    X = basis.sample_domain(problem.domain, m, n, np.random.default_rng(seed))
    bset = basis.infer_basis(net, m, X, alpha)
    w = problem.material.weights(problem.family, X, alpha) \
        if use_material else None
    lam, V, _ = basis.extract_ordered_modes(bset.phi, bset.grads, w=w)
    k = bset.phi.shape[1]
    gram_inf = float(np.abs(bset.gram() - np.eye(k)).max())
    return m, lam, V, gram_inf


def mode_eval(net, m, V, i, alpha):
    def f(P):
        return field.eval_values(net, m, np.atleast_2d(P), alpha) @ V[:, i]
    return f


def mean_mode_jump(net, m, V, alpha, pts, nrm, detector):
    per_mode = []
    for i in range(V.shape[1]):
        f = mode_eval(net, m, V, i, alpha)
        per_mode.append(np.mean([detector(f, p, nrm, offset=1e-3)
                                 for p in pts]))
    return float(np.mean(per_mode))


def crease_probe_lines(alpha, n=20):
    """20 points on the crease at the given angle, the crease normal, and a
    parallel control line 0.07 off the crease."""
    c = np.array([0.5, 0.5])
    u = np.array([np.cos(alpha * np.pi), np.sin(alpha * np.pi)])
    nrm = np.array([-u[1], u[0]])
    t = np.linspace(-0.45, 0.45, n)
    on = c[None, :] + t[:, None] * u[None, :]
    off = on + 0.07 * nrm[None, :]
    return on, off, nrm


# -- 1: dominant mode against the dense FEM reference ------------------------------

def test_01_dominant_mode_matches_fem(bar_scene, bar_net):
    net, seconds = bar_net
    m, lam, V, _ = ordered_modes(net, bar_scene, 0.5, use_material=True)
    probes = np.linspace(0.0, 1.0, 512)[:, None]
    vals = mode_eval(net, m, V, 1, 0.5)(probes)

    n_el = 1024
    mids = (np.arange(n_el) + 0.5) / n_el
    w = np.where(mids < 0.5, 1.0, 4.0)
    lam_f, U = oracle.fem_modes_1d(n_el, w, 3, cache_dir=str(CACHE))
    ref = np.interp(probes[:, 0], np.linspace(0.0, 1.0, n_el + 1), U[:, 1])

    a = vals / np.linalg.norm(vals)
    b = ref / np.linalg.norm(ref)
    if a @ b < 0:
        a = -a
    rel = float(np.linalg.norm(a - b))
    jr = oracle.jump_residual(mode_eval(net, m, V, 1, 0.5), [0.5], [1.0],
                              w1=1.0, w2=4.0, offset=1e-3)
    ok = rel < 0.05 and jr < 0.15 and seconds < 600.0
    report("1 dominant mode vs FEM", ok,
           f"rel L2 {rel:.4f} < 0.05, jump residual {jr:.4f} < 0.15, "
           f"train {seconds:.0f}s < 600s")


# -- 2: removing the lifted coordinate degrades the kink ---------------------------

def test_02_constant_lift_ablation(bar_scene, bar_net, bar_constant_net):
    net, _ = bar_net
    cnet, _ = bar_constant_net
    m, _, V, _ = ordered_modes(net, bar_scene, 0.5, use_material=True)
    twin = constant_twin(bar_scene)
    cm, _, cV, _ = ordered_modes(cnet, twin, 0.5, use_material=True)
    jr = oracle.jump_residual(mode_eval(net, m, V, 1, 0.5), [0.5], [1.0],
                              w1=1.0, w2=4.0, offset=1e-3)
    jrc = oracle.jump_residual(mode_eval(cnet, cm, cV, 1, 0.5), [0.5], [1.0],
                               w1=1.0, w2=4.0, offset=1e-3)
    ok = jrc >= 3.0 * jr
    report("2 constant-lift ablation", ok,
           f"constant residual {jrc:.4f} >= 3x lifted {jr:.4f} "
           f"(ratio {jrc / max(jr, 1e-12):.1f})")


# -- 3: gradient jump across a 2D crease -------------------------------------------

def test_03_crease_gradient_jump(crease_scene, crease_net,
                                 crease_constant_net):
    net, _ = crease_net
    cnet, _ = crease_constant_net
    alpha = crease_scene.alpha
    on, _, nrm = crease_probe_lines(alpha)
    m, _, V, _ = ordered_modes(net, crease_scene, alpha)
    twin = constant_twin(crease_scene)
    cm, _, cV, _ = ordered_modes(cnet, twin, alpha)
    lifted = mean_mode_jump(net, m, V, alpha, on, nrm, oracle.gradient_jump)
    flat = mean_mode_jump(cnet, cm, cV, alpha, on, nrm, oracle.gradient_jump)
    ok = lifted >= 10.0 * flat
    report("3 crease gradient jump", ok,
           f"lifted {lifted:.4f} >= 10x no-lift {flat:.4f} "
           f"(ratio {lifted / max(flat, 1e-12):.1f})")


# -- 4: kirigami cut and crease together -------------------------------------------

def test_04_kirigami_cut_and_crease(kirigami_scene, kirigami_net):
    net, _ = kirigami_net
    alpha = kirigami_scene.alpha
    m, _, V, _ = ordered_modes(net, kirigami_scene, alpha)
    xs = np.linspace(0.05, 0.95, 20)
    nrm = np.array([0.0, 1.0])
    cut_pts = np.stack([xs, np.full(20, 0.75)], axis=1)
    crease_pts = np.stack([xs, np.full(20, 0.5)], axis=1)
    ctrl_pts = np.stack([xs, np.full(20, 0.625)], axis=1)

    cut_val = mean_mode_jump(net, m, V, alpha, cut_pts, nrm,
                             oracle.value_jump)
    ctrl_val = mean_mode_jump(net, m, V, alpha, ctrl_pts, nrm,
                              oracle.value_jump)
    crease_val = mean_mode_jump(net, m, V, alpha, crease_pts, nrm,
                                oracle.value_jump)
    crease_grad = mean_mode_jump(net, m, V, alpha, crease_pts, nrm,
                                 oracle.gradient_jump)
    ctrl_grad = mean_mode_jump(net, m, V, alpha, ctrl_pts, nrm,
                               oracle.gradient_jump)
    ok = (cut_val >= 10.0 * ctrl_val
          and crease_grad >= 10.0 * ctrl_grad
          and crease_val <= 0.1 * cut_val)
    report("4 kirigami cut + crease", ok,
           f"cut value jump {cut_val:.4f} >= 10x noise {ctrl_val:.5f}; "
           f"crease gradient jump {crease_grad:.4f} >= 10x {ctrl_grad:.5f}; "
           f"crease value jump {crease_val:.5f} <= 0.1x cut {cut_val:.4f}")


# -- 5: hash-accelerated queries agree with brute force and win on time ------------

def test_05_hash_vs_brute_10k():
    rep = bench.hash_vs_brute(n_segments=10000, n_queries=10000, s=0.02,
                              seed=0, repeats=2)
    ok = (rep.n_within > 0 and rep.max_diff <= 1e-12 and rep.far_consistent
          and rep.t_hash < rep.t_brute)
    report("5 hash vs brute 10k x 10k", ok,
           f"within-s {rep.n_within}, max diff {rep.max_diff:.1e} <= 1e-12, "
           f"far sets identical {rep.far_consistent}, "
           f"hash {rep.t_hash * 1e3:.0f}ms < brute {rep.t_brute * 1e3:.0f}ms")


# -- 6: derivative contracts on every fixture scene ---------------------------------

def clear_points(sc, m, n, rng, min_dist=5e-3):
    """Points clear of the interface, the cut, and the clamp shell at
    distance s (the clamp's curvature switches there)."""
    pts = []
    while len(pts) < n:
        X = basis.sample_domain(sc.domain, m, 4 * (n - len(pts)), rng)
        dist = closest_point_many(m.interface, X)[1]
        keep = (dist > min_dist) & (np.abs(dist - m.s) > 1e-3)
        if m.cut is not None:
            keep &= closest_point_many(m.cut, X)[1] > min_dist
        pts.extend(X[keep][:n - len(pts)])
    return np.stack(pts)


def fd_jacobian(fn, x, eps=1e-5):
    cols = []
    for c in range(x.shape[0]):
        dx = np.zeros_like(x)
        dx[c] = eps
        cols.append((fn(x + dx) - fn(x - dx)) / (2 * eps))
    return np.stack(cols, axis=-1)


def fd_hessian(fn, x, eps=1e-5):
    d = x.shape[0]
    f0 = fn(x)
    H = np.zeros(f0.shape + (d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = eps
        H[..., i, i] = (fn(x + ei) - 2 * f0 + fn(x - ei)) / eps ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = eps
            mixed = (fn(x + ei + ej) - fn(x + ei - ej)
                     - fn(x - ei + ej) + fn(x - ei - ej)) / (4 * eps ** 2)
            H[..., i, j] = H[..., j, i] = mixed
    return H


def directional_param_fd(net, m, X, alpha, kind, w, lam, u, eps):
    flat = params_to_flat(net.params)

    def loss_at(t):
        shifted = FieldNetwork(spec=net.spec,
                               params=flat_to_params(net.spec, flat + t * u),
                               meta=net.meta)
        return field.parameter_gradient(shifted, m, X, alpha, kind=kind,
                                        w=w, lam=lam)[0]

    return (loss_at(eps) - loss_at(-eps)) / (2 * eps)


def test_06_derivative_contracts(bar_scene, family_scene, crease_scene,
                                 kirigami_scene, finger_scene):
    scenes = [bar_scene, family_scene, crease_scene, kirigami_scene,
              finger_scene]
    rng = np.random.default_rng(31)
    worst_g = worst_h = 0.0
    n_points = 0
    for sc in scenes:
        net = sc.network()
        m = sc.train_problem().lift_map(sc.alpha)
        X = clear_points(sc, m, 20, rng)
        n_points += X.shape[0]
        for x in X:
            f = lambda p: field.eval_values(net, m, p[None], sc.alpha)[0]
            g = field.spatial_gradient(net, x, m, sc.alpha)
            g_fd = fd_jacobian(f, x)
            rel = np.abs(g_fd - g).max() / max(np.abs(g).max(), 1e-10)
            worst_g = max(worst_g, rel)
            h = field.spatial_hessian(net, x, m, sc.alpha)
            worst_h = max(worst_h, np.abs(fd_hessian(f, x) - h).max())

    plan = [(bar_scene, ["value"] * 3 + ["dirichlet"] * 4),
            (crease_scene, ["dirichlet"] * 3 + ["hessian"] * 4),
            (kirigami_scene, ["value", "value", "dirichlet", "dirichlet",
                              "hessian", "hessian"])]
    tol = {"value": 1e-4, "dirichlet": 1e-3, "hessian": 1e-3}
    worst_p = {k: 0.0 for k in tol}
    n_dirs = 0
    for sc, kinds in plan:
        net = sc.network()
        problem = sc.train_problem()
        m = problem.lift_map(sc.alpha)
        X = clear_points(sc, m, 32, rng)
        w = problem.material.weights(problem.family, X, sc.alpha)
        flat = params_to_flat(net.params)
        eps = 1e-6 * (1.0 + np.abs(flat).max())
        for kind in kinds:
            n_dirs += 1
            _, _, grads = field.parameter_gradient(net, m, X, sc.alpha,
                                                   kind=kind, w=w, lam=0.5)
            u = rng.standard_normal(flat.size)
            u /= np.linalg.norm(u)
            an = float(params_to_flat(grads) @ u)
            fd = directional_param_fd(net, m, X, sc.alpha, kind, w, 0.5,
                                      u, eps)
            rel = abs(fd - an) / max(abs(an), abs(fd), 1e-12)
            worst_p[kind] = max(worst_p[kind], rel)

    ok = (n_points >= 100 and worst_g < 1e-4 and worst_h < 1e-3
          and n_dirs == 20 and worst_p["value"] < 1e-4
          and worst_p["dirichlet"] < 1e-3 and worst_p["hessian"] < 1e-3)
    report("6 derivative contracts", ok,
           f"{n_points} points: gradient rel {worst_g:.2e} < 1e-4, "
           f"hessian abs {worst_h:.2e} < 1e-3; {n_dirs} weight directions: "
           f"value {worst_p['value']:.2e} < 1e-4, "
           f"dirichlet {worst_p['dirichlet']:.2e} < 1e-3, "
           f"hessian {worst_p['hessian']:.2e} < 1e-3")


# -- 7: integrator invariants --------------------------------------------------------

def free_cubature(d=2, n=64, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, (n, d))
    pts -= pts.mean(axis=0)
    return sim.CubatureSet(points=pts, vol=np.full(n, 1.0 / n),
                           w=np.zeros(n), phi=np.ones((n, 1)),
                           grads=np.zeros((n, 1, d)), alpha=0.0)


def test_07_integrator_invariants(bar_scene):
    cub = free_cubature(seed=5)
    rng = np.random.default_rng(6)
    z = 0.01 * rng.standard_normal((1, 2, 3))
    zp = 0.01 * rng.standard_normal((1, 2, 3))
    state = sim.ReducedState(z=z, z_prev=zp, h=0.02)
    new, _ = sim.step(state, cub, mu=1.0, lam=1.0)
    free_err = float(np.abs(new.z - (2.0 * z - zp)).max())

    g = np.array([0.3, -9.8])
    moment = np.einsum("n,nj,nb->jb", cub.vol, cub.phi, cub.xhat)
    h = 0.01
    state = sim.ReducedState.rest(1, 2, h)
    probe = np.array([0.3, 0.2])
    xs = [sim.displacement(state.z, np.ones(1), probe)]
    for _ in range(30):
        state, _ = sim.step(state, cub, mu=1.0, lam=1.0,
                            handles=(sim.gravity_handle(g),),
                            anchor_phi=(None,), anchor_xhat=(None,),
                            grav_moment=moment)
        xs.append(sim.displacement(state.z, np.ones(1), probe))
    xs = np.stack(xs)
    ballistic_err = float(np.abs(xs[2:] - 2 * xs[1:-1] + xs[:-2]
                                 - h * h * g).max())

    s = bar_scene.simulation(bar_scene.network(), n_cubature=256,
                             handles=[sim.pin_handle([0.4], [0.0], 5.0)])
    rng = np.random.default_rng(12)
    monotone = True
    for _ in range(100):
        s.queue_move_handle(0, rng.uniform(-0.2, 0.2, 1))
        s.step()
        r = s.last_report
        monotone &= r.objective <= r.initial_objective * (1 + 1e-12) + 1e-12

    ok = free_err < 1e-12 and ballistic_err < 1e-8 and monotone
    report("7 integrator invariants", ok,
           f"free step {free_err:.1e} < 1e-12, "
           f"ballistic {ballistic_err:.1e} < 1e-8, "
           f"objective non-increasing over 100 random steps: {monotone}")


# -- 8: trained bases stay near orthonormal -----------------------------------------

def test_08_gram_identity(bar_scene, bar_net, crease_scene, crease_net):
    _, _, _, g_bar = ordered_modes(bar_net[0], bar_scene, bar_scene.alpha)
    _, _, _, g_crease = ordered_modes(crease_net[0], crease_scene,
                                      crease_scene.alpha)
    ok = g_bar < 0.05 and g_crease < 0.05
    report("8 gram near identity", ok,
           f"|G - I|_inf bar {g_bar:.4f} < 0.05, crease {g_crease:.4f} "
           f"< 0.05")


# -- 9: interpolation across the shape family ---------------------------------------

def test_09_family_generalizes_to_held_out_alpha(family_scene, family_net):
    net, _ = family_net
    alpha = 0.6                      # held out of the training set
    x_star = 0.25 + 0.5 * alpha      # where the kink must land
    m, _, V, _ = ordered_modes(net, family_scene, alpha, use_material=True)
    f1 = mode_eval(net, m, V, 1, alpha)
    jr = oracle.jump_residual(f1, [x_star], [1.0], w1=1.0, w2=4.0,
                              offset=1e-3)
    xs = np.linspace(0.0, 1.0, 257)
    u = f1(xs[:, None])
    d2 = np.abs(u[:-2] - 2 * u[1:-1] + u[2:])
    loc = xs[1 + int(np.argmax(d2))]
    spacing = xs[1] - xs[0]
    ok = jr < 0.25 and abs(loc - x_star) <= 2 * spacing
    report("9 held-out alpha", ok,
           f"jump residual {jr:.4f} < 0.25 at x={x_star}, kink at "
           f"{loc:.4f} within 2 spacings ({2 * spacing:.4f}) of {x_star}")


# -- 10: shape optimization ----------------------------------------------------------

def test_10_shape_optimization(finger_scene, finger_net):
    evaluate = lambda a: 1.0 - (a - 0.6) ** 2
    res = sim.optimize_shape(evaluate, 0.25, (0.0, 1.0), iterations=10,
                             fd_step=0.02)
    synthetic_ok = (not res.aborted) and abs(res.alpha - 0.6) <= 0.01

    net, _ = finger_net

    def factory(alpha):
        return finger_scene.simulation(net, alpha=alpha, n_cubature=512,
                                       seed=0)

    evaluate = sim.displacement_objective(factory, steps=50)
    t0 = time.perf_counter()
    res = sim.optimize_shape(evaluate, finger_scene.alpha, (0.0, 1.0),
                             iterations=10, fd_step=0.02)
    dt = time.perf_counter() - t0
    j0 = res.trace[0][1]
    gain = (res.objective - j0) / max(abs(j0), 1e-12)
    ok = synthetic_ok and not res.aborted and gain >= 0.20
    report("10 shape optimization", ok,
           f"synthetic optimum 0.6 +- 0.01 found: {synthetic_ok}; "
           f"finger J {j0:.3e} -> {res.objective:.3e} "
           f"(+{gain * 100:.0f}% >= 20%) at alpha {res.alpha:.3f} "
           f"in {len(res.trace)} evals, {dt:.0f}s")


# -- 11: live edit round trip (service half) -----------------------------------------

def test_11_service_reinfers_within_budget(crease_scene, crease_net):
    svc = SimulationService(crease_scene, crease_net[0], port=0,
                            max_fps=120.0)
    svc.sim.step()               # compile the kernels off the clock
    svc.start()
    try:
        c = LineClient(svc.host, svc.port)
        c.recv_type("config")
        c.recv_type("frame")         # simulation loop is warm
        target = crease_scene.family.mesh(0.6).vertices
        c.send({"type": "set_crease", "vertices": target.tolist(),
                "id": "drag-1"})
        t0 = time.perf_counter()
        ack = c.recv_type("ack")
        acked_ok = ack["ok"] and ack["id"] == "drag-1"
        while True:
            frame = c.recv_type("frame")
            if abs(frame["alpha"] - 0.6) < 1e-6:
                break
        dt = time.perf_counter() - t0
        c.close()
        ok = acked_ok and dt < 1.0
        report("11 live crease edit", ok,
               f"ack ok, re-inferred frame at alpha 0.6 after {dt * 1e3:.0f}"
               f"ms < 1000ms")
    finally:
        svc.stop()
