"""Problems module: test problems, MRMS, eigenvalue estimates, stable-dt
search, references, config files."""

import numpy as np
import pytest

from _oracles import series_expm
from fsrk import (
    BracketError,
    InputError,
    SearchFailureError,
    benchmark_sample_times,
    default_fhn_benchmark,
    estimate_extreme_eigenvalues,
    fd_jacobian,
    floor_sig,
    fsrk_step,
    get_method,
    integrate,
    largest_stable_dt,
    make_linear_pair,
    make_noncommuting,
    make_rd_fhn,
    mrms,
    plan_from_string,
    read_problem_config,
    reference_solution,
    with_counting,
)

A1 = np.array([[-0.5, 1.0], [0.0, -0.2]])
A2 = np.array([[-0.3, 0.0], [0.8, -0.6]])


def test_mrms_hand_formula(rng):
    X = rng.normal(size=(7, 3))
    R = rng.normal(size=(7, 3))
    want = np.sqrt(np.mean(((X - R) / (1.0 + np.abs(R))) ** 2))
    rep = mrms(X, R)
    assert rep.value == pytest.approx(want, rel=1e-14)
    assert rep.sample_count == X.size
    per = np.sqrt(np.mean(((X - R) / (1.0 + np.abs(R))) ** 2, axis=0))
    assert np.allclose(rep.per_variable, per)


def test_mrms_validation(rng):
    X = rng.normal(size=(4, 2))
    with pytest.raises(InputError):
        mrms(X, X[:3])
    with pytest.raises(InputError):
        mrms(np.empty((0, 2)), np.empty((0, 2)))
    R = X.copy()
    R[0, 0] = np.nan
    with pytest.raises(InputError):
        mrms(X, R)
    bad = X.copy()
    bad[1, 1] = np.inf
    assert mrms(bad, X).value == np.inf


def test_linear_pair_exact_and_commutator():
    p = make_linear_pair(-1.5, -0.25)
    assert p.commutator_norm == 0.0
    t = 0.7
    assert p.exact(t)[0] == pytest.approx(np.exp(-1.75 * t), rel=1e-14)
    y = np.array([2.0])
    assert p.full_rhs(0.0, y)[0] == pytest.approx(-1.75 * 2.0, rel=1e-14)


def test_noncommuting_exact_matches_series_oracle():
    p = make_noncommuting(A1, A2)
    for t in (0.3, 1.0):
        want = series_expm(A1 + A2, t) @ p.y0
        assert np.allclose(p.exact(t), want, rtol=0.0, atol=1e-13)
    comm = A1 @ A2 - A2 @ A1
    assert p.commutator_norm == pytest.approx(np.linalg.norm(comm), rel=1e-14)
    assert p.commutator_norm > 0.1


def test_noncommuting_rejects_bad_shapes():
    with pytest.raises(InputError):
        make_noncommuting(A1, np.eye(3))
    with pytest.raises(InputError):
        make_noncommuting(np.ones(2), np.ones(2))


def test_fhn_split_adds_up(rng):
    p = make_rd_fhn(
        31, 0.05, 0.001,
        stimulus_spec={"indices": np.arange(5), "window": (0.0, 0.1), "amp": 8.0},
    )
    y = rng.normal(scale=0.4, size=p.n)
    for t in (0.0, 0.05, 0.3):
        got = p.f1(t, y) + p.f2(t, y)
        assert np.allclose(got, p.full_rhs(t, y), rtol=0.0, atol=1e-12)


def test_fhn_stimulus_window_is_half_open(rng):
    amp = 8.0
    p = make_rd_fhn(
        31, 0.05, 0.001,
        stimulus_spec={"indices": np.arange(5), "window": (0.0, 0.1), "amp": amp},
    )
    y = rng.normal(scale=0.2, size=p.n)
    on = p.f2(0.0, y)
    boundary = p.f2(0.1, y)
    off = p.f2(0.2, y)
    assert np.allclose(boundary, off)
    delta = on - off
    assert np.allclose(delta[0:10:2], amp)
    assert np.allclose(delta[10:], 0.0)
    assert np.allclose(delta[1::2], 0.0)


def test_fhn_jacobians_match_finite_differences(rng):
    p = make_rd_fhn(21, 0.05, 0.001)
    y = rng.normal(scale=0.3, size=p.n)
    fd1 = fd_jacobian(p.f1, 0.0, y, bandwidth=p.bandwidth1)
    fd2 = fd_jacobian(p.f2, 0.0, y, bandwidth=p.bandwidth2)
    assert np.allclose(p.jac1(0.0, y), fd1, atol=2e-5)
    assert np.allclose(p.jac2(0.0, y), fd2, atol=2e-4)


def test_fhn_zero_diffusion(rng):
    p = make_rd_fhn(21, 0.05, 0.0)
    y = rng.normal(size=p.n)
    assert np.all(p.f1(0.0, y) == 0.0)
    # at rest (v = 0) the excitation variable decays at rate a / eps
    lam_d, lam_r = estimate_extreme_eigenvalues(p, np.zeros(p.n))
    assert lam_d == 0.0
    assert lam_r < -100.0


def test_fhn_validation():
    with pytest.raises(InputError):
        make_rd_fhn(2, 0.05, 0.001)
    with pytest.raises(InputError):
        make_rd_fhn(21, -0.05, 0.001)
    with pytest.raises(InputError):
        make_rd_fhn(21, 0.05, -1.0)
    with pytest.raises(InputError):
        make_rd_fhn(21, 0.05, 0.001, fhn_params={"eps": 0.0})
    with pytest.raises(InputError):
        make_rd_fhn(
            21, 0.05, 0.001,
            stimulus_spec={"indices": [30], "window": (0, 1), "amp": 1.0},
        )


def test_fhn_2d_structure(rng):
    p = make_rd_fhn(7, 0.1, 0.01, ny=5)
    assert p.n == 2 * 7 * 5
    assert p.bandwidth1 == 2 * 5
    y = rng.normal(scale=0.3, size=p.n)
    assert np.allclose(
        p.f1(0.0, y) + p.f2(0.0, y), p.full_rhs(0.0, y), atol=1e-12
    )
    # constant field: Neumann Laplacian of a constant vanishes
    yc = np.zeros(p.n)
    yc[0::2] = 0.7
    assert np.allclose(p.f1(0.0, yc), 0.0, atol=1e-12)


def test_swapped_problem(rng):
    p = make_rd_fhn(21, 0.05, 0.001)
    q = p.swapped()
    y = rng.normal(scale=0.3, size=p.n)
    assert np.array_equal(q.f1(0.0, y), p.f2(0.0, y))
    assert np.array_equal(q.f2(0.0, y), p.f1(0.0, y))
    assert q.diffusion_op == 2
    assert np.array_equal(q.voltage_indices, p.voltage_indices)
    back = q.swapped()
    assert back.diffusion_op == 1
    assert np.array_equal(back.f1(0.0, y), p.f1(0.0, y))


def test_estimated_eigenvalues_match_dense(rng):
    p = make_rd_fhn(21, 0.05, 0.001)
    states = 0.25 + 0.1 * rng.normal(size=(5, p.n))
    lam_d, lam_r = estimate_extreme_eigenvalues(p, states)
    dense_d = np.linalg.eigvalsh(0.5 * (p.matrix1 + p.matrix1.T))
    assert lam_d == pytest.approx(dense_d.min(), rel=0.02)
    worst = np.inf
    for y in states:
        Jd = fd_jacobian(p.f2, 0.0, y)
        worst = min(worst, np.linalg.eigvals(Jd).real.min())
    assert lam_r == pytest.approx(worst, rel=0.02)


def test_with_counting_step_costs():
    p, counts = with_counting(make_linear_pair(-1.0, -2.0))
    m = get_method("ruth")
    plan = plan_from_string("rk3:rk3", "DR")
    fsrk_step(p, m, plan, 0.0, p.y0, 0.1)
    assert counts["f1"] == 9
    assert counts["f2"] == 9
    assert counts["jac1"] == 0
    # negative coefficients downgraded to forward Euler: one sub-flow
    # in each operator drops from 3 evaluations to 1
    p2, counts2 = with_counting(make_linear_pair(-1.0, -2.0))
    fsrk_step(p2, m, plan_from_string("rk3:rk3+negfe", "DR"), 0.0, p2.y0, 0.1)
    assert counts2["f1"] == 7
    assert counts2["f2"] == 7


def test_floor_sig_frozen_cases():
    assert floor_sig(0.0068) == 0.0068
    assert floor_sig(0.006899) == 0.0068
    assert floor_sig(123.9) == 120.0
    assert floor_sig(0.01) == 0.01
    assert floor_sig(0.09999) == 0.099
    with pytest.raises(InputError):
        floor_sig(0.0)
    with pytest.raises(InputError):
        floor_sig(-1.0)


def _exact_reference(prob, sample_times):
    return np.array([prob.exact(t) for t in sample_times])


def test_largest_stable_dt_brackets():
    prob = make_linear_pair(-2.0, -50.0)
    m = get_method("lie-trotter")
    plan = plan_from_string("fe:fe", "DR")
    samples = np.linspace(0.0, 1.0, 6)
    ref = _exact_reference(prob, samples)
    # passing upper bound comes back unchanged
    dt = largest_stable_dt(prob, m, plan, (0.001, 0.002), 0.05,
                           0.0, 1.0, samples, ref)
    assert dt == 0.002
    # failing lower bound cannot bracket
    with pytest.raises(BracketError):
        largest_stable_dt(prob, m, plan, (0.5, 1.0), 0.05,
                          0.0, 1.0, samples, ref)
    with pytest.raises(InputError):
        largest_stable_dt(prob, m, plan, (0.5, 0.1), 0.05,
                          0.0, 1.0, samples, ref)


def test_largest_stable_dt_bisects_to_two_significant_figures():
    prob = make_linear_pair(-2.0, -50.0)
    m = get_method("lie-trotter")
    plan = plan_from_string("fe:fe", "DR")
    samples = np.linspace(0.0, 1.0, 6)
    ref = _exact_reference(prob, samples)
    dt = largest_stable_dt(prob, m, plan, (0.002, 0.2), 0.05,
                           0.0, 1.0, samples, ref)
    assert dt == floor_sig(dt)
    assert 0.002 < dt < 0.2
    traj = integrate(prob, m, plan, 0.0, 1.0, dt, checkpoints=samples)
    assert mrms(traj.at_times(samples), ref).value <= 0.05


def test_reference_solution_converges_and_caches(tmp_path):
    prob = make_noncommuting(A1, A2)
    samples = np.linspace(0.0, 1.0, 5)
    states, dt_used = reference_solution(
        prob, 0.0, 1.0, samples, tol=1e-6, cache_dir=str(tmp_path)
    )
    assert states.shape == (5, 2)
    assert dt_used < 1.0 / 2000.0
    want = _exact_reference(prob, samples)
    assert np.allclose(states, want, atol=1e-5)
    cached, dt2 = reference_solution(
        prob, 0.0, 1.0, samples, tol=1e-6, cache_dir=str(tmp_path)
    )
    assert np.array_equal(cached, states) and dt2 == dt_used
    assert list(tmp_path.glob("ref_*.npz"))


def test_reference_solution_failure():
    prob = make_noncommuting(A1, A2)
    samples = np.linspace(0.0, 1.0, 5)
    with pytest.raises(SearchFailureError):
        reference_solution(prob, 0.0, 1.0, samples, tol=1e-30, max_halvings=3)


def test_default_benchmark_shape():
    problem, t0, tf, samples = default_fhn_benchmark()
    assert problem.n == 402
    assert (t0, tf) == (0.0, 8.0)
    assert len(samples) == 21
    assert np.allclose(samples, np.linspace(0.0, 8.0, 21))
    assert np.array_equal(problem.voltage_indices, np.arange(0, 402, 2))
    assert np.allclose(benchmark_sample_times(0.0, 8.0, 21), samples)


def test_read_problem_config(tmp_path):
    path = tmp_path / "prob.txt"
    path.write_text(
        "problem fhn1d\n"
        "nx 41\n"
        "dx 0.05\n"
        "diff 0.001\n"
        "eps 0.002\n"
        "stim_indices 0:6\n"
        "stim_window 0 0.1\n"
        "stim_amp 8\n"
    )
    p = read_problem_config(path)
    assert p.n == 82
    assert p.params["eps"] == 0.002
    # 0:6 and an explicit comma list mean the same node set
    path2 = tmp_path / "prob2.txt"
    path2.write_text(
        "problem fhn1d\nnx 41\ndx 0.05\ndiff 0.001\neps 0.002\n"
        "stim_indices 0,1,2,3,4,5\nstim_window 0 0.1\nstim_amp 8\n"
    )
    q = read_problem_config(path2)
    y = 0.1 * np.ones(p.n)
    assert np.array_equal(p.f2(0.05, y), q.f2(0.05, y))


def test_read_problem_config_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("nx 41\n")
    with pytest.raises(InputError):
        read_problem_config(path)
    path.write_text("problem heat\nnx 41\n")
    with pytest.raises(InputError):
        read_problem_config(path)
    path.write_text("problem fhn1d\nnx 41\ndx 0.05\ndiff 0.001\nwhat 3\n")
    with pytest.raises(InputError):
        read_problem_config(path)
    with pytest.raises(InputError):
        read_problem_config(tmp_path / "missing.txt")
