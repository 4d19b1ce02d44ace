"""Reduced integrator: kinematics, implicit stepping, edits, shape search."""

import numpy as np
import pytest

from creaselift import sim
from creaselift.basis import TrainProblem
from creaselift.domain import BoxDomain
from creaselift.field import FieldSpec, init_network
from creaselift.kernels.common import DET_BARRIER
from creaselift.lifting import family


# -- helpers ------------------------------------------------------------------

def free_cubature(d=2, n=64, seed=0, k=1):
    """Zero material weight and a constant basis phi = 1: the only forces
    left are inertia and handles, so steps have closed forms."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, (n, d))
    pts -= pts.mean(axis=0)   # moment sum(vol phi [x;1]) becomes [0, 1]
    return sim.CubatureSet(points=pts, vol=np.full(n, 1.0 / n),
                           w=np.zeros(n), phi=np.ones((n, k)),
                           grads=np.zeros((n, k, d)), alpha=0.0)


def bar_problem():
    return TrainProblem(domain=BoxDomain([0.0], [1.0]),
                        family=family("point_1d"), s=0.125,
                        lift_mode="gradient")


def square_problem():
    return TrainProblem(domain=BoxDomain([0.0, 0.0], [1.0, 1.0]),
                        family=family("vline_square"), s=0.125,
                        lift_mode="gradient")


def small_sim(problem=None, seed=4, **kw):
    problem = bar_problem() if problem is None else problem
    d = problem.domain.lo.shape[0]
    spec = FieldSpec(dimension=d, lifted=1, k=3, width=16, layers=3,
                     omega0=5.0, n_freq=2)
    args = dict(problem=problem, net=init_network(spec, seed=seed), alpha=0.5,
                h=0.01, n_cubature=128, seed=1)
    args.update(kw)
    return sim.Simulation(**args)


# -- material and kinematics ---------------------------------------------------

def test_lame_parameters():
    mu, lam = sim.lame_parameters(1.0, 0.25)
    assert mu == pytest.approx(0.4)
    assert lam == pytest.approx(0.4)
    with pytest.raises(ValueError):
        sim.lame_parameters(-1.0, 0.3)
    with pytest.raises(ValueError):
        sim.lame_parameters(1.0, 0.5)


def test_reduced_state_validation():
    with pytest.raises(ValueError, match=r"\(k, d, d\+1\)"):
        sim.ReducedState(z=np.zeros((2, 2, 2)), z_prev=np.zeros((2, 2, 2)),
                         h=0.01)
    with pytest.raises(ValueError, match="differ in shape"):
        sim.ReducedState(z=np.zeros((2, 2, 3)), z_prev=np.zeros((1, 2, 3)),
                         h=0.01)
    with pytest.raises(ValueError, match="finite"):
        sim.ReducedState(z=np.full((1, 1, 2), np.nan),
                         z_prev=np.zeros((1, 1, 2)), h=0.01)
    with pytest.raises(ValueError, match="positive"):
        sim.ReducedState.rest(1, 1, 0.0)


def test_displacement_affine_in_z():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((3, 2, 3))
    phi = rng.standard_normal(3)
    x = np.array([0.3, 0.7])
    want = sum(phi[j] * (z[j] @ np.append(x, 1.0)) for j in range(3))
    assert np.allclose(sim.displacement(z, phi, x), want, atol=1e-14)
    batch = sim.displacement(z, np.tile(phi, (5, 1)), np.tile(x, (5, 1)))
    assert np.allclose(batch, np.tile(want, (5, 1)), atol=1e-14)


def test_deformation_gradient_matches_fd():
    rng = np.random.default_rng(3)
    z = 0.1 * rng.standard_normal((2, 2, 3))
    x = np.array([0.2, 0.4])
    A = rng.standard_normal((2, 2))
    b = rng.standard_normal((2, 2))

    def phi_at(p):
        return A @ p + b @ p ** 2

    def grads_at(p):
        return A + 2.0 * b * p[None, :]

    F = sim.deformation_gradient(z, phi_at(x), grads_at(x), x)
    eps = 1e-6
    for c in range(2):
        dx = np.zeros(2)
        dx[c] = eps
        up = sim.displacement(z, phi_at(x + dx), x + dx)
        dn = sim.displacement(z, phi_at(x - dx), x - dx)
        fd = (up - dn) / (2 * eps)
        assert np.allclose(F[:, c] - np.eye(2)[:, c], fd, atol=1e-8)


def test_elastic_energy_density():
    assert sim.elastic_energy_density(np.eye(3), 2.0, 1.0, 1.0) == 0.0
    F = np.diag([2.0, 1.0])
    lnj = np.log(2.0)
    want = 0.5 * 1.0 * (4.0 + 1.0 - 2.0) - lnj + 0.5 * 3.0 * lnj * lnj
    got = sim.elastic_energy_density(F, 1.0, 1.0, 3.0)
    assert got == pytest.approx(want, rel=1e-12)
    bad = sim.elastic_energy_density(np.diag([-1.0, 1.0]), 1.0, 1.0, 1.0)
    assert bad >= DET_BARRIER


def test_handle_constructors():
    p = sim.pin_handle([0.1, 0.2], [0.3, 0.4], 5.0)
    assert p.kind == "pin" and p.points.shape == (1, 2)
    q = sim.pair_handle([0.0, 0.0], [3.0, 4.0], 1.0)
    assert q.rest == pytest.approx(5.0)
    g = sim.gravity_handle([0.0, -9.8], density=2.0)
    assert g.points.shape == (0, 2) and g.stiffness == 2.0
    with pytest.raises(ValueError, match="unknown handle kind"):
        sim.Handle(kind="rope", points=np.zeros((1, 2)), stiffness=1.0,
                   target=np.zeros(2))
    with pytest.raises(ValueError, match="needs 2 anchor"):
        sim.Handle(kind="pair", points=np.zeros((1, 2)), stiffness=1.0,
                   target=np.zeros(2))


def test_cubature_validation():
    cub = free_cubature()
    with pytest.raises(ValueError, match="length mismatch"):
        sim.CubatureSet(points=cub.points, vol=cub.vol[:-1], w=cub.w,
                        phi=cub.phi, grads=cub.grads, alpha=0.0)
    with pytest.raises(ValueError, match="at least one point"):
        sim.CubatureSet(points=np.zeros((0, 2)), vol=np.zeros(0),
                        w=np.zeros(0), phi=np.zeros((0, 1)),
                        grads=np.zeros((0, 1, 2)), alpha=0.0)


# -- closed-form steps -----------------------------------------------------------

def test_free_inertial_step_is_exact():
    cub = free_cubature(seed=5)
    rng = np.random.default_rng(6)
    z = 0.01 * rng.standard_normal((1, 2, 3))
    zp = 0.01 * rng.standard_normal((1, 2, 3))
    state = sim.ReducedState(z=z, z_prev=zp, h=0.02)
    new, report = sim.step(state, cub, mu=1.0, lam=1.0)
    assert np.abs(new.z - (2.0 * z - zp)).max() < 1e-12
    assert not report.aborted and not report.barrier_hit
    assert new.step_index == 1 and np.array_equal(new.z_prev, z)


def test_gravity_step_is_ballistic():
    cub = free_cubature(seed=7)
    g = np.array([0.3, -9.8])
    handles = (sim.gravity_handle(g, density=1.0),)
    moment = np.einsum("n,nj,nb->jb", cub.vol, cub.phi, cub.xhat)
    h = 0.01
    state = sim.ReducedState.rest(1, 2, h)
    probe = np.array([0.3, 0.2])
    xs = [sim.displacement(state.z, np.ones(1), probe)]
    for _ in range(30):
        state, report = sim.step(state, cub, mu=1.0, lam=1.0,
                                 handles=handles, anchor_phi=(None,),
                                 anchor_xhat=(None,), grav_moment=moment)
        assert not report.aborted
        xs.append(sim.displacement(state.z, np.ones(1), probe))
    xs = np.stack(xs)
    second = xs[2:] - 2.0 * xs[1:-1] + xs[:-2]
    assert np.abs(second - h * h * g).max() < 1e-8


def test_pin_spring_reaches_static_equilibrium():
    # k=1 constant basis, one pin: minimum of the incremental objective
    # walks toward the static solution and stays there
    cub = free_cubature(seed=8)
    target = np.array([0.15, -0.1])
    hdl = sim.pin_handle([0.0, 0.0], target, stiffness=50.0)
    state = sim.ReducedState.rest(1, 2, 0.05)
    aphi = (np.ones((1, 1)),)
    axhat = (np.array([[0.0, 0.0, 1.0]]),)
    for _ in range(400):
        state, report = sim.step(state, cub, mu=1.0, lam=1.0, handles=[hdl],
                                 anchor_phi=aphi, anchor_xhat=axhat)
    u = sim.displacement(state.z, np.ones(1), np.zeros(2))
    assert np.abs(u - target).max() < 1e-6


def test_minimize_quadratic_converges_in_one_iteration():
    cub = free_cubature(seed=9)
    zhat = np.full((1, 2, 3), 0.25)
    z, report = sim.minimize_incremental(np.zeros((1, 2, 3)), zhat, 0.01,
                                         cub, 1.0, 1.0)
    assert np.abs(z - zhat).max() < 1e-15
    assert report.iterations <= 2 and report.objective <= 1e-28


# -- simulation object --------------------------------------------------------------

def test_objective_never_increases_over_random_steps():
    s = small_sim(handles=[sim.pin_handle([0.4], [0.0], stiffness=5.0)])
    rng = np.random.default_rng(12)
    for _ in range(100):
        s.queue_move_handle(0, rng.uniform(-0.2, 0.2, 1))
        s.step()
        r = s.last_report
        assert r.objective <= r.initial_objective * (1 + 1e-12) + 1e-12


def test_free_vibration_amplitude_decays():
    s = small_sim(young=200.0)
    rng = np.random.default_rng(13)
    z0 = 0.01 * rng.standard_normal(s.state.z.shape)
    s.state = sim.ReducedState(z=z0, z_prev=z0, h=s.state.h)
    norms = [np.linalg.norm(f.z) for f in s.run(150)]
    assert np.mean(norms[-10:]) < 0.9 * np.mean(norms[:10])


def test_alpha_edit_refreshes_basis_in_place():
    s = small_sim()
    s.run(3)
    pts_before = s.cubature.points.copy()
    phi_before = s.cubature.phi.copy()
    z_before = s.state.z.copy()
    s.queue_set_alpha(0.8)
    assert s.apply_pending_edits()
    assert s.alpha == 0.8 and s.cubature.alpha == 0.8
    assert np.array_equal(s.cubature.points, pts_before)
    assert not np.array_equal(s.cubature.phi, phi_before)
    assert np.array_equal(s.state.z, z_before)
    # no queued edits: nothing to do
    assert not s.apply_pending_edits()


def test_alpha_edit_validated_on_apply():
    s = small_sim()
    s.queue_set_alpha(1.5)
    with pytest.raises(ValueError):
        s.step()


def test_move_handle_edit():
    s = small_sim(handles=[sim.pin_handle([0.4], [0.0], stiffness=1.0)])
    s.queue_move_handle(0, [0.3])
    assert not s.apply_pending_edits()   # no basis refresh needed
    assert s.handles[0].target == pytest.approx(0.3)


def test_set_crease_edit_fits_alpha():
    s = small_sim(problem=square_problem())
    s.queue_set_crease([0.6, 0.0], [0.6, 1.0])
    assert s.apply_pending_edits()
    assert s.alpha == pytest.approx(0.7, abs=1e-6)
    assert not s.out_of_family
    s.queue_set_crease([0.0, 0.0], [1.0, 1.0])   # diagonal: outside family
    s.apply_pending_edits()
    assert s.out_of_family


def test_frames_and_tracers():
    s = small_sim(tracers=[[0.25], [0.75]])
    f0 = s.current_frame()
    assert f0.step == 0 and np.array_equal(f0.tracers,
                                           [[0.25], [0.75]])
    frames = s.run(4)
    assert [f.step for f in frames] == [1, 2, 3, 4]
    frames[0].z[:] = np.nan   # frames carry copies, not live state
    assert np.isfinite(s.state.z).all()


def test_same_seed_same_cubature():
    a, b = small_sim(seed=4), small_sim(seed=4)
    assert np.array_equal(a.cubature.points, b.cubature.points)


def test_mean_displacement_zero_at_rest():
    s = small_sim()
    assert np.abs(sim.mean_displacement(s)).max() == 0.0


def test_alpha_outside_family_range_rejected():
    with pytest.raises(ValueError):
        small_sim(alpha=2.0)


# -- shape search -------------------------------------------------------------------

def test_optimize_shape_finds_synthetic_peak():
    evaluate = lambda a: 1.0 - (a - 0.6) ** 2
    res = sim.optimize_shape(evaluate, 0.25, (0.0, 1.0), iterations=10,
                             fd_step=0.02)
    assert not res.aborted
    assert res.alpha == pytest.approx(0.6, abs=0.01)
    assert res.objective == pytest.approx(1.0, abs=1e-3)
    assert res.trace[0][0] == 0.25


def test_optimize_shape_validation():
    f = lambda a: a
    with pytest.raises(ValueError, match="no room"):
        sim.optimize_shape(f, 0.5, (0.0, 1.0), fd_step=0.5)
    with pytest.raises(ValueError, match="too close to the range ends"):
        sim.optimize_shape(f, 0.999, (0.0, 1.0), fd_step=0.02)


def test_optimize_shape_aborts_cleanly_on_failure():
    def broken(a):
        raise RuntimeError("solver blew up")

    res = sim.optimize_shape(broken, 0.5, (0.0, 1.0), iterations=5)
    assert res.aborted and res.alpha == 0.5 and res.trace == ()

    calls = []

    def flaky(a):
        calls.append(a)
        if len(calls) > 3:
            raise RuntimeError("later failure")
        return 1.0 - (a - 0.6) ** 2

    res = sim.optimize_shape(flaky, 0.5, (0.0, 1.0), iterations=5)
    assert res.aborted
    assert res.objective == pytest.approx(max(1.0 - (a - 0.6) ** 2
                                              for a in calls[:3]))


def test_displacement_objective_runs_steps():
    s = {"n": 0}

    class FakeSim:
        def __init__(self):
            s["n"] += 1

        def run(self, steps):
            s["steps"] = steps

        state = sim.ReducedState.rest(1, 1, 0.01)
        cubature = free_cubature(d=1, n=4)

    evaluate = sim.displacement_objective(lambda a: FakeSim(), steps=7)
    assert evaluate(0.3) == 0.0
    assert s["n"] == 1 and s["steps"] == 7
