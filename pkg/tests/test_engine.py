import numpy as np
import pytest

from hygec.denoisers import PROB_FLOOR, x_posterior_spike_slab
from hygec.engine import (
    FactorizationFailure,
    HygecConfig,
    gaussian_reproduction_residuals,
    hygec_run,
    hygec_sweep,
    init_state,
    lmmse_block,
    resolve_p_z,
)
from hygec.ensembles import (
    MatrixSpec,
    apply_channel,
    gen_group_sparse_signal,
    gen_matrix,
    snr_to_noise_var,
)
from hygec.oracle import exact_posterior_small
from hygec.types import (
    CONVERGED,
    MAX_ITERATIONS,
    NUMERICAL_FAILURE,
    Channel,
    DimensionMismatch,
    GroupStructure,
    InvalidParameter,
    ProblemInstance,
)


def _instance(seed, m, n, k, rho, snr_db, sigma_x_sq=1.0):
    groups = GroupStructure.even(n, k)
    H = gen_matrix(MatrixSpec("iid", m, n), np.random.default_rng([seed, 0]))
    x, xi = gen_group_sparse_signal(groups, rho, sigma_x_sq, np.random.default_rng([seed, 1]))
    noise_var = snr_to_noise_var(H, rho, sigma_x_sq, snr_db)
    channel = Channel.linear_awgn(noise_var)
    y = apply_channel(H, x, channel, np.random.default_rng([seed, 2]))
    return ProblemInstance(H, y, groups, channel, sigma_x_sq, x, xi, rho)


def test_config_validation():
    HygecConfig(damping=1.0)  # undamped is allowed
    for bad in (
        dict(max_iter=0),
        dict(tol=0.0),
        dict(damping=0.0),
        dict(damping=1.5),
        dict(v_min=1.0, v_max=1.0),
        dict(p_z_init="bogus"),
        dict(p_z_init=-1.0),
        dict(x_var_init="other"),
    ):
        with pytest.raises(InvalidParameter):
            HygecConfig(**bad)


def test_resolve_p_z():
    inst = ProblemInstance(
        np.eye(4),
        np.zeros(4),
        GroupStructure.even(4, 2),
        Channel.linear_awgn(0.3),
        2.0,
    )
    # ||H||_F^2 / M = 1 for the identity, so auto is rho*sigma_x_sq + noise_var
    assert resolve_p_z(inst, 0.25, HygecConfig()) == pytest.approx(0.25 * 2.0 + 0.3)
    assert resolve_p_z(inst, 0.25, HygecConfig(p_z_init=7.0)) == 7.0


def test_init_state_layout():
    inst = _instance(0, 6, 10, 5, 0.2, 15.0, sigma_x_sq=2.0)
    cfg = HygecConfig()
    st = init_state(inst, 0.2, cfg)
    assert st.t == 0
    assert st.m_z_pri.shape == (6,) and st.m_x_pri.shape == (10,)
    assert np.all(st.m_z_pri == 0) and np.all(st.m_x_lik == 0) and np.all(st.x_pos == 0)
    assert np.all(st.v_z_lik == cfg.v_max) and np.all(st.v_x_lik == cfg.v_max)
    assert np.all(st.v_x_pri == 0.2 * 2.0)
    assert np.all(st.rho_hat == 0.2)
    lit = init_state(inst, 0.2, HygecConfig(x_var_init="literal"))
    assert np.all(lit.v_x_pri == 0.2)


def test_lmmse_identity_sensing_is_scalar_product():
    rng = np.random.default_rng(0)
    n = 7
    mz, vz = rng.uniform(-2, 2, n), rng.uniform(0.5, 2.0, n)
    mx, vx = rng.uniform(-2, 2, n), rng.uniform(0.5, 2.0, n)
    x_pos, v_x, z_pos, v_z = lmmse_block(np.eye(n), mz, vz, mx, vx)
    v_ref = 1.0 / (1.0 / vz + 1.0 / vx)
    m_ref = v_ref * (mz / vz + mx / vx)
    assert np.max(np.abs(x_pos - m_ref)) < 1e-12
    assert np.max(np.abs(v_x - v_ref)) < 1e-12
    assert np.max(np.abs(z_pos - m_ref)) < 1e-12
    assert np.max(np.abs(v_z - v_ref)) < 1e-12


def test_lmmse_matches_dense_inverse():
    rng = np.random.default_rng(1)
    m, n = 9, 6
    H = rng.standard_normal((m, n))
    mz, vz = rng.uniform(-2, 2, m), rng.uniform(0.5, 2.0, m)
    mx, vx = rng.uniform(-2, 2, n), rng.uniform(0.5, 2.0, n)
    x_pos, v_x, z_pos, v_z = lmmse_block(H, mz, vz, mx, vx)
    q = np.linalg.inv(H.T @ np.diag(1.0 / vz) @ H + np.diag(1.0 / vx))
    x_ref = q @ (H.T @ (mz / vz) + mx / vx)
    assert np.max(np.abs(x_pos - x_ref)) < 1e-9
    assert np.max(np.abs(v_x - np.diag(q))) < 1e-9
    assert np.max(np.abs(z_pos - H @ x_ref)) < 1e-9
    assert np.max(np.abs(v_z - np.diag(H @ q @ H.T))) < 1e-9


def test_lmmse_translates_factorization_errors():
    # an indefinite system must surface as FactorizationFailure, not LinAlgError
    with pytest.raises(FactorizationFailure):
        lmmse_block(
            np.array([[0.0]]), np.array([1.0]), np.array([1.0]), np.array([0.0]), np.array([-1.0])
        )


def test_one_sweep_identity_sensing_matches_scalar_denoiser():
    # with H = I the first sweep reduces to the scalar spike-slab denoiser
    # applied to the raw observations under the channel noise
    n, rho, nv = 12, 0.3, 0.01
    groups = GroupStructure.even(n, 4)
    x, xi = gen_group_sparse_signal(groups, rho, 1.0, np.random.default_rng(1))
    y = apply_channel(np.eye(n), x, Channel.linear_awgn(nv), np.random.default_rng(2))
    inst = ProblemInstance(np.eye(n), y, groups, Channel.linear_awgn(nv), 1.0, x, xi, rho)
    cfg = HygecConfig()
    st = init_state(inst, rho, cfg)
    hygec_sweep(st, inst, rho, cfg)
    (ref_mean, ref_var), _ = x_posterior_spike_slab(y, nv, rho, 1.0)
    assert np.max(np.abs(st.x_pos - ref_mean)) < 1e-8
    assert np.max(np.abs(st.v_x_pos - np.maximum(ref_var, cfg.v_min))) < 1e-8


def test_sweep_keeps_state_sane():
    inst = _instance(2, 20, 30, 6, 0.2, 12.0)
    cfg = HygecConfig()
    st = init_state(inst, 0.2, cfg)
    for t in range(30):
        hygec_sweep(st, inst, 0.2, cfg)
        assert st.t == t + 1
        assert st.all_finite()
        for v in (st.v_z_pri, st.v_z_lik, st.v_x_pri, st.v_x_lik, st.v_x_pos):
            assert np.all(v >= cfg.v_min) and np.all(v <= cfg.v_max)
        assert np.all(st.rho_hat >= PROB_FLOOR) and np.all(st.rho_hat <= 1 - PROB_FLOOR)


def test_run_validates_inputs():
    inst = _instance(0, 6, 10, 5, 0.2, 15.0)
    with pytest.raises(InvalidParameter):
        hygec_run(inst, 0.0)
    with pytest.raises(InvalidParameter):
        hygec_run(inst, 1.0)
    short = ProblemInstance(
        inst.H, inst.y[:-1], inst.groups, inst.channel, 1.0, inst.x_true, inst.xi_true, 0.2
    )
    with pytest.raises(DimensionMismatch):
        hygec_run(short, 0.2)


def test_run_converges_on_benign_instance():
    inst = _instance(0, 40, 60, 6, 0.2, 18.0)
    m_x_lik, v_x_lik, rho_hat, x_pos, report = hygec_run(inst, 0.2)
    assert report.termination == CONVERGED
    assert 0 < report.inner_iterations < 200
    assert report.inner_counts == [report.inner_iterations]
    assert report.x_hat is x_pos
    assert report.nmse_trace[-1] < -12.0
    assert m_x_lik.shape == v_x_lik.shape == x_pos.shape == (60,)
    assert rho_hat.shape == (60,)


def test_run_skips_nmse_trace_for_all_zero_truth():
    inst = _instance(3, 40, 60, 6, 0.2, 18.0)
    assert int(np.sum(inst.xi_true)) == 0
    _, _, _, _, report = hygec_run(inst, 0.2)
    assert report.nmse_trace == []
    assert report.termination == CONVERGED


def test_run_honors_iteration_cap():
    inst = _instance(1, 40, 60, 6, 0.2, 18.0)
    _, _, _, _, report = hygec_run(inst, 0.2, HygecConfig(max_iter=2))
    assert report.termination == MAX_ITERATIONS
    assert report.inner_iterations == 2


def test_run_records_overflow_as_numerical_failure():
    inst = _instance(0, 10, 16, 4, 0.3, 15.0)
    huge = ProblemInstance(
        inst.H * 1e160, inst.y, inst.groups, inst.channel, 1.0, inst.x_true, inst.xi_true, 0.3
    )
    with np.errstate(all="ignore"):
        _, _, _, _, report = hygec_run(huge, 0.3)
    assert report.termination == NUMERICAL_FAILURE


def test_run_matches_exact_posterior_on_tiny_instances():
    # 50 undamped-start sweeps on 6x8 problems land within 1e-3 RMS of the
    # full 2^4-pattern enumeration at this SNR
    for seed in range(5):
        inst = _instance(seed, 6, 8, 4, 0.1, 20.0)
        cfg = HygecConfig()
        st = init_state(inst, 0.1, cfg)
        for _ in range(50):
            hygec_sweep(st, inst, 0.1, cfg)
        x_ref, _, _ = exact_posterior_small(inst, 0.1, 1.0)
        rms = float(np.sqrt(np.mean((st.x_pos - x_ref) ** 2)))
        assert rms < 1e-3, f"seed {seed}: rms {rms}"


def test_run_continues_from_supplied_state():
    inst = _instance(0, 40, 60, 6, 0.2, 18.0)
    cfg3 = HygecConfig(max_iter=3)
    st = init_state(inst, 0.2, cfg3)
    hygec_run(inst, 0.2, cfg3, state=st)
    assert st.t == 3
    hygec_run(inst, 0.2, HygecConfig(max_iter=5), state=st)
    assert st.t == 8


def test_reproduction_residuals_vanish_at_fixed_point():
    inst = _instance(1, 60, 100, 10, 0.15, 15.0)
    cfg = HygecConfig(max_iter=120, tol=1e-30)
    st = init_state(inst, 0.15, cfg)
    for _ in range(120):
        hygec_sweep(st, inst, 0.15, cfg)
    d_mean, d_var, clamped = gaussian_reproduction_residuals(st)
    free = ~clamped
    assert np.any(free)
    assert np.max(d_mean[free]) < 1e-9
    assert np.max(d_var[free]) < 1e-9


def test_reproduction_residuals_flag_clamped_elements():
    inst = _instance(0, 6, 10, 5, 0.2, 15.0)
    cfg = HygecConfig()
    st = init_state(inst, 0.2, cfg)
    assert np.all(gaussian_reproduction_residuals(st)[2])  # fresh v_x_lik sits at v_max
    st.v_x_lik = np.ones(10)
    _, _, clamped = gaussian_reproduction_residuals(st)
    assert not np.any(clamped)
    st.v_x_lik[4] = cfg.v_max
    _, _, clamped = gaussian_reproduction_residuals(st)
    assert clamped[4] and clamped.sum() == 1
