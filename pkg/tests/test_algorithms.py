import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sclipnet.algorithms import (AlgoSpec, initial_state, estimator_bound, consensus_bounds, drift_bound,
                                 run_trajectory, step, step_dist_clip, step_dsgd, step_network_clip,
                                 step_sclip_ef, step_sclip_ef_network, step_sgd)
from sclipnet.clipping import Schedule
from sclipnet.noise import NoiseModel
from sclipnet.problem import from_matrices, gradients, objective_gap
from sclipnet.topology import complete_uniform

SCHED = Schedule(c_phi=1.0, tau=0.3, c_beta=0.5, c_eta=0.27386127875258304)


def _state(problem, seed=0):
    st_ = initial_state(problem.n, problem.d)
    st_.X[:] = np.random.default_rng(seed).normal(size=st_.X.shape)
    return st_


def test_sclip_scalar_step_by_hand(scalar_problem):
    s = Schedule(c_phi=2.0, tau=1.0, c_beta=0.5, c_eta=0.5)
    st0 = initial_state(1, 1, [1.0])
    st1 = step_sclip_ef(st0, scalar_problem, s, np.array([[0.5]]))
    # g = 2*1 - 4 + 0.5 = -1.5; Psi = -1.5 * 2 / sqrt(2.25 + 1); beta = 0.5
    m = 0.5 * (-3.0 / math.sqrt(3.25))
    assert st1.M[0, 0] == pytest.approx(m, rel=1e-15)
    assert st1.X[0, 0] == pytest.approx(1.0 - 0.5 * m, rel=1e-15)
    assert st1.t == 1


def test_sclip_saturates_on_huge_noise(scalar_problem):
    st1 = step_sclip_ef(initial_state(1, 1), scalar_problem, SCHED, np.array([[1e12]]))
    assert st1.M[0, 0] == pytest.approx(0.5 * SCHED.c_phi, rel=1e-9)


def test_network_average_identity(ref_problem, cycle20, heavy):
    rng = np.random.default_rng(1)
    st_ = _state(ref_problem)
    for _ in range(20):
        xi = rng.standard_cauchy(size=(20, 10))
        xbar = st_.xbar
        eta = SCHED.at(st_.t)[3]
        nxt = step_sclip_ef_network(st_, ref_problem, cycle20, SCHED, xi)
        np.testing.assert_allclose(nxt.xbar, xbar - eta * nxt.M.mean(0), rtol=0, atol=1e-12)
        st_ = nxt


def test_complete_graph_reduces_to_server(ref_problem):
    rng = np.random.default_rng(2)
    net = _state(ref_problem)
    net.X[:] = net.X[0]
    srv = initial_state(ref_problem.n, ref_problem.d, net.X[0])
    W = complete_uniform(ref_problem.n)
    for _ in range(50):
        xi = rng.standard_cauchy(size=(ref_problem.n, ref_problem.d))
        net = step_sclip_ef_network(net, ref_problem, W, SCHED, xi)
        srv = step_sclip_ef(srv, ref_problem, SCHED, xi)
        np.testing.assert_allclose(net.X, srv.X, rtol=0, atol=1e-12)


def test_zero_noise_descent(ref_problem):
    st_ = initial_state(ref_problem.n, ref_problem.d)
    gap0 = objective_gap(ref_problem, st_.xbar)
    xi = np.zeros((ref_problem.n, ref_problem.d))
    for _ in range(10):
        st_ = step_sclip_ef(st_, ref_problem, SCHED, xi)
    assert objective_gap(ref_problem, st_.xbar) < gap0


def test_dsgd_spike_versus_clipping(ref_problem, cycle20):
    st0 = initial_state(ref_problem.n, ref_problem.d)
    xi = np.zeros((ref_problem.n, ref_problem.d))
    xi[3, 4] = 1e6
    plain = step_dsgd(st0, ref_problem, cycle20, 1.0, xi)
    assert np.abs(plain.X).max() > 1e4
    gclip = step_network_clip(st0, ref_problem, cycle20, 1.0, 5.0, "global", xi)
    cclip = step_network_clip(st0, ref_problem, cycle20, 1.0, 2.0, "component", xi)
    sclip = step_sclip_ef_network(st0, ref_problem, cycle20, SCHED, xi)
    # one step moves each node by at most eta * threshold before mixing
    assert np.abs(gclip.X).max() <= 5.0 + 1e-12
    assert np.abs(cclip.X).max() <= 2.0 + 1e-12
    assert np.abs(sclip.X).max() <= SCHED.c_eta * SCHED.c_phi + 1e-12


def test_divergence_flag(scalar_problem):
    st1 = step_sgd(initial_state(1, 1), scalar_problem, 1.0, np.array([[1e40]]))
    assert st1.diverged


def test_huge_threshold_equals_plain(ref_problem, cycle20):
    rng = np.random.default_rng(3)
    st0 = _state(ref_problem)
    xi = rng.normal(size=(20, 10))
    ref = step_dsgd(st0, ref_problem, cycle20, 0.7, xi)
    for variant in ("global", "component"):
        np.testing.assert_array_equal(step_network_clip(st0, ref_problem, cycle20, 0.7, 1e15, variant, xi).X, ref.X)
    ref = step_sgd(st0, ref_problem, 0.7, xi)
    np.testing.assert_allclose(step_dist_clip(st0, ref_problem, 0.7, 1e15, "global", xi).X, ref.X, rtol=1e-15)


def test_dist_clip_by_hand():
    p = from_matrices([[[1.0]], [[1.0]]], [[0.0], [0.0]])
    st0 = initial_state(2, 1, [0.0])
    st1 = step_dist_clip(st0, p, 1.0, 1.0, "component", np.array([[10.0], [-0.5]]))
    # eta_0 = 1; clipped gradients 1 and -0.5; average 0.25
    np.testing.assert_allclose(st1.X, [[-0.25], [-0.25]])
    st1 = step_dist_clip(st0, p, 1.0, 1.0, "global", np.array([[3.0], [-0.5]]))
    np.testing.assert_allclose(st1.X, [[-0.25], [-0.25]])


def test_generic_step_dispatch(ref_problem, cycle20):
    xi = np.random.default_rng(4).normal(size=(20, 10))
    st0 = _state(ref_problem)
    spec = AlgoSpec("network_cclip", a=1.0, lam=2.0)
    np.testing.assert_array_equal(step(spec, st0, ref_problem, cycle20, xi).X,
                                  step_network_clip(st0, ref_problem, cycle20, 1.0, 2.0, "component", xi).X)
    spec = AlgoSpec("sclip_ef_network", schedule=SCHED)
    np.testing.assert_array_equal(step(spec, st0, ref_problem, cycle20, xi).X,
                                  step_sclip_ef_network(st0, ref_problem, cycle20, SCHED, xi).X)


def test_spec_validation():
    with pytest.raises(ValueError):
        AlgoSpec("adam")
    with pytest.raises(ValueError):
        AlgoSpec("sclip_ef")
    with pytest.raises(ValueError):
        AlgoSpec("dsgd")
    with pytest.raises(ValueError):
        AlgoSpec("network_gclip", a=1.0)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e12))
def test_sclip_sure_displacement_bounds(seed, scale):
    """Estimator and per-step movement stay bounded whatever the noise magnitude."""
    p = from_matrices(np.tile(np.eye(3), (4, 1, 1)), np.zeros((4, 3)))
    rng = np.random.default_rng(seed)
    st_ = initial_state(4, 3)
    for t in range(30):
        xi = rng.standard_cauchy(size=(4, 3)) * scale
        nxt = step_sclip_ef(st_, p, SCHED, xi)
        assert np.abs(nxt.M).max() <= estimator_bound(SCHED.c_phi, t + 1) * (1 + 1e-12)
        eta = SCHED.at(t)[3]
        assert np.abs(nxt.X - st_.X).max() <= eta * SCHED.c_phi * (1 + 1e-12)
        st_ = nxt


def test_bound_helpers():
    assert estimator_bound(2.0, 0) == 2.0
    assert estimator_bound(2.0, 16) == pytest.approx(1.0)
    assert drift_bound(1.0, 3.0, 1) == pytest.approx(20.0)
    s = consensus_bounds(0.5, 2.0, 0.5, 4, 1, 3)
    ref = [0.0]
    for t in range(3):
        ref.append(0.5 * (ref[-1] + 2 * 2.0 * 0.5 * 2.0 / (t + 1) ** 0.7))
    np.testing.assert_allclose(s, ref, rtol=1e-14)
    assert np.all(consensus_bounds(1.0, 1.0, 0.0, 4, 2, 5) == 0)


def test_run_trajectory_zero_steps(ref_problem, cycle20, heavy):
    tr = run_trajectory(AlgoSpec("dsgd", a=1.0), ref_problem, heavy, cycle20, 0, 1)
    assert tr.t.tolist() == [0] and tr.gap_log10[0] == 0.0


def test_run_trajectory_matches_step_functions(small_problem, cycle6, heavy):
    from sclipnet.rng import NoiseSource
    spec = AlgoSpec("sclip_ef_network", schedule=SCHED)
    tr = run_trajectory(spec, small_problem, heavy, cycle6, 40, 5, run=2, backend="numpy")
    xi = NoiseSource(heavy, 5, 2, small_problem.n, small_problem.d).window(0, 40)
    st_ = initial_state(small_problem.n, small_problem.d)
    for k in range(40):
        st_ = step_sclip_ef_network(st_, small_problem, cycle6, SCHED, xi[k])
    assert tr.gap[-1] == pytest.approx(objective_gap(small_problem, st_.xbar), rel=1e-10)
    assert tr.m_inf[-1] == pytest.approx(np.abs(st_.M).max(), rel=1e-12)


def test_run_trajectory_is_deterministic(small_problem, cycle6, heavy):
    spec = AlgoSpec("sclip_ef_network", schedule=SCHED)
    a = run_trajectory(spec, small_problem, heavy, cycle6, 3000, 9, record_every=7)
    b = run_trajectory(spec, small_problem, heavy, cycle6, 3000, 9, record_every=7)
    assert a.body() == b.body()
    assert a.t[-1] == 3000 and a.t[1] == 7
    c = run_trajectory(spec, small_problem, heavy, cycle6, 3000, 9, run=1, record_every=7)
    assert c.body() != a.body()


def test_backends_give_same_trace(small_problem, cycle6, heavy):
    spec = AlgoSpec("network_gclip", a=1.0, lam=5.0)
    a = run_trajectory(spec, small_problem, heavy, cycle6, 2500, 3, backend="numpy")
    b = run_trajectory(spec, small_problem, heavy, cycle6, 2500, 3, backend="numba")
    np.testing.assert_allclose(a.gap, b.gap, rtol=1e-9, atol=1e-14)
    assert a.header["noise_checksum"] == b.header["noise_checksum"]


def test_monitors_hold_under_theorem_schedule(ref_problem, cycle20, heavy):
    from sclipnet.clipping import theorem_constants
    consts = theorem_constants(ref_problem.mu, ref_problem.L, heavy.sigma, ref_problem.d)
    spec = AlgoSpec("sclip_ef_network", schedule=consts.schedule())
    tr = run_trajectory(spec, ref_problem, heavy, cycle20, 2000, 11)
    for k in ("m_bound", "consensus_bound", "drift_bound"):
        assert tr.header[f"{k}_violations"] == "0"
        assert tr.monitors[k].ok.all()


def test_baselines_have_no_monitors(small_problem, cycle6, heavy):
    tr = run_trajectory(AlgoSpec("dsgd", a=1.0), small_problem, heavy, cycle6, 10, 1)
    assert tr.monitors["m_bound"] is None and tr.header["m_bound_violations"] == "NA"


def test_diverged_run_is_flagged(scalar_problem):
    noise = NoiseModel(kind="gaussian", truncation=(-3e35, 3e35), stddev=1e35)
    tr = run_trajectory(AlgoSpec("sgd", a=1.0), scalar_problem, noise, None, 20, 0)
    assert tr.diverged[-1] and np.isnan(tr.gap[-1])
    assert tr.header["diverged_at"] != "none"
