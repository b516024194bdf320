"""Inner recovery engine: damped vector-EP sweeps over the linear-mixing part
coupled to scalar activity messages, plus the driver loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .denoisers import (
    Moments,
    channel_posterior,
    extrinsic,
    llr_messages,
    x_posterior_spike_slab,
)
from .oracle import nmse
from .types import (
    CONVERGED,
    MAX_ITERATIONS,
    NUMERICAL_FAILURE,
    GecState,
    HygecError,
    InvalidParameter,
    ProblemInstance,
    RecoveryReport,
    validate_instance,
)


class FactorizationFailure(HygecError):
    pass


class NonFinite(HygecError):
    pass


@dataclass(frozen=True)
class HygecConfig:
    max_iter: int = 200
    tol: float = 1e-8
    damping: float = 0.7
    v_min: float = 1e-11
    v_max: float = 1e11
    p_z_init: float | str = "auto"  # positive value, or "auto"
    x_var_init: str = "prior"  # "prior": rho*sigma_x_sq, "literal": rho

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParameter("max_iter must be positive")
        if not self.tol > 0:
            raise InvalidParameter("tol must be positive")
        if not 0 < self.damping <= 1:
            raise InvalidParameter("damping must lie in (0, 1]")
        if not 0 < self.v_min < self.v_max:
            raise InvalidParameter("need 0 < v_min < v_max")
        if isinstance(self.p_z_init, str):
            if self.p_z_init != "auto":
                raise InvalidParameter("p_z_init must be positive or 'auto'")
        elif not self.p_z_init > 0:
            raise InvalidParameter("p_z_init must be positive or 'auto'")
        if self.x_var_init not in ("prior", "literal"):
            raise InvalidParameter("x_var_init must be 'prior' or 'literal'")


def resolve_p_z(inst: ProblemInstance, rho: float, cfg: HygecConfig) -> float:
    if cfg.p_z_init != "auto":
        return float(cfg.p_z_init)
    m = inst.m
    return rho * inst.sigma_x_sq * float(np.sum(inst.H**2)) / m + inst.channel.noise_var


def init_state(inst: ProblemInstance, rho: float, cfg: HygecConfig) -> GecState:
    """Fresh message state: zero means, prior-level variances, activity at rho.

    Likelihood-side messages are placeholders (they are recomputed before first
    use inside a sweep); their variances start at v_max, i.e. uninformative.
    """
    m, n = inst.m, inst.n
    p_z = resolve_p_z(inst, rho, cfg)
    v_x0 = rho * inst.sigma_x_sq if cfg.x_var_init == "prior" else rho
    return GecState(
        m_z_pri=np.zeros(m),
        v_z_pri=np.full(m, np.clip(p_z, cfg.v_min, cfg.v_max)),
        m_z_lik=np.zeros(m),
        v_z_lik=np.full(m, cfg.v_max),
        m_x_pri=np.zeros(n),
        v_x_pri=np.full(n, np.clip(v_x0, cfg.v_min, cfg.v_max)),
        m_x_lik=np.zeros(n),
        v_x_lik=np.full(n, cfg.v_max),
        rho_hat=np.full(n, rho),
        x_pos=np.zeros(n),
        v_x_pos=np.full(n, np.clip(v_x0, cfg.v_min, cfg.v_max)),
        t=0,
    )


def lmmse_block(H, m_z_lik, v_z_lik, m_x_pri, v_x_pri):
    """Joint Gaussian combine of the z-side and x-side messages through H.

    Solves (H^T D H + diag(1/v_x_pri)) with D = diag(1/v_z_lik) by Cholesky and
    returns (x_pos2, v_x_pos2, z_pos1, v_z_pos1), the posterior means and
    marginal variances on both sides. The inverse is formed explicitly; fine
    for the problem sizes this targets (N up to a couple thousand).
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[1]
    hd = H / np.asarray(v_z_lik, dtype=float)[:, None]
    prec = hd.T @ H
    prec[np.diag_indices(n)] += 1.0 / np.asarray(v_x_pri, dtype=float)
    prec = 0.5 * (prec + prec.T)
    try:
        c, low = cho_factor(prec, check_finite=False)
        q = cho_solve((c, low), np.eye(n), check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    except ValueError as exc:
        raise FactorizationFailure(str(exc)) from exc
    rhs = hd.T @ np.asarray(m_z_lik, dtype=float) + np.asarray(m_x_pri) / np.asarray(v_x_pri)
    x_pos2 = q @ rhs
    v_x_pos2 = np.diag(q).copy()
    z_pos1 = H @ x_pos2
    hq = H @ q
    v_z_pos1 = np.einsum("ij,ij->i", hq, H)
    return x_pos2, v_x_pos2, z_pos1, v_z_pos1


def _damp(new: Moments, old_mean, old_var, damp: float) -> tuple[np.ndarray, np.ndarray]:
    if damp >= 1.0:
        return np.asarray(new.mean, dtype=float), np.asarray(new.var, dtype=float)
    return (
        damp * np.asarray(new.mean) + (1.0 - damp) * old_mean,
        damp * np.asarray(new.var) + (1.0 - damp) * old_var,
    )


def hygec_sweep(state: GecState, inst: ProblemInstance, rho: float, cfg: HygecConfig) -> GecState:
    """One full message-passing sweep, mutating `state` in place.

    Order: z-channel denoise, joint solve to the x side, spike-slab denoise,
    joint solve back to the z side, activity-message refresh. The first sweep
    runs undamped because the stale sides of the state are placeholders.
    """
    damp = cfg.damping if state.t > 0 else 1.0

    z_pos = channel_posterior(inst.channel, inst.y, state.m_z_pri, state.v_z_pri)
    ext = extrinsic(z_pos, Moments(state.m_z_pri, state.v_z_pri), cfg.v_min, cfg.v_max)
    state.m_z_lik, state.v_z_lik = _damp(ext, state.m_z_lik, state.v_z_lik, damp)

    x_pos2, v_x_pos2, _, _ = lmmse_block(
        inst.H, state.m_z_lik, state.v_z_lik, state.m_x_pri, state.v_x_pri
    )
    ext = extrinsic(
        Moments(x_pos2, v_x_pos2), Moments(state.m_x_pri, state.v_x_pri), cfg.v_min, cfg.v_max
    )
    state.m_x_lik, state.v_x_lik = _damp(ext, state.m_x_lik, state.v_x_lik, damp)

    (x_mean, x_var), _pi = x_posterior_spike_slab(
        state.m_x_lik, state.v_x_lik, state.rho_hat, inst.sigma_x_sq
    )
    state.x_pos = x_mean
    state.v_x_pos = np.maximum(x_var, cfg.v_min)  # spike-heavy elements hit zero variance
    ext = extrinsic(
        Moments(state.x_pos, state.v_x_pos),
        Moments(state.m_x_lik, state.v_x_lik),
        cfg.v_min,
        cfg.v_max,
    )
    state.m_x_pri, state.v_x_pri = _damp(ext, state.m_x_pri, state.v_x_pri, damp)

    _, _, z_pos1, v_z_pos1 = lmmse_block(
        inst.H, state.m_z_lik, state.v_z_lik, state.m_x_pri, state.v_x_pri
    )
    ext = extrinsic(
        Moments(z_pos1, v_z_pos1), Moments(state.m_z_lik, state.v_z_lik), cfg.v_min, cfg.v_max
    )
    state.m_z_pri, state.v_z_pri = _damp(ext, state.m_z_pri, state.v_z_pri, damp)

    state.rho_hat = llr_messages(
        state.m_x_lik, state.v_x_lik, rho, inst.sigma_x_sq, inst.groups
    )

    state.t += 1
    if not state.all_finite():
        raise NonFinite(f"non-finite message state after sweep {state.t}")
    return state


def hygec_run(
    inst: ProblemInstance,
    rho: float,
    cfg: HygecConfig | None = None,
    state: GecState | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, RecoveryReport]:
    """Run sweeps until the posterior mean stops moving or the budget runs out.

    Returns (m_x_lik, v_x_lik, rho_hat, x_pos, report). Numerical trouble is
    recorded in report.termination rather than raised, so parameter sweeps can
    keep going past divergent configurations.
    """
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    if cfg is None:
        cfg = HygecConfig()
    validate_instance(inst)
    if state is None:
        state = init_state(inst, rho, cfg)

    report = RecoveryReport(x_hat=state.x_pos)
    track_nmse = inst.x_true is not None and np.any(np.asarray(inst.x_true) != 0)
    termination = MAX_ITERATIONS
    for _ in range(cfg.max_iter):
        x_prev = state.x_pos
        try:
            hygec_sweep(state, inst, rho, cfg)
        except (FactorizationFailure, NonFinite):
            termination = NUMERICAL_FAILURE
            break
        report.inner_iterations += 1
        if track_nmse:
            report.nmse_trace.append(nmse(state.x_pos, inst.x_true))
        if float(np.sum((state.x_pos - x_prev) ** 2)) < cfg.tol * inst.n:
            termination = CONVERGED
            break

    report.termination = termination
    report.x_hat = state.x_pos
    report.inner_counts = [report.inner_iterations]
    return state.m_x_lik, state.v_x_lik, state.rho_hat, state.x_pos, report


def gaussian_reproduction_residuals(
    state: GecState, v_min: float = 1e-11, v_max: float = 1e11
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals of the product identity at the current state.

    Combining the prior-side and likelihood-side x messages should reproduce
    the stored posterior moments once the run has settled. Returns
    (mean_residual, var_residual, clamped) where `clamped` flags elements whose
    variances sit at the clamp bounds (the identity is not expected there).
    """
    prec = 1.0 / state.v_x_pri + 1.0 / state.v_x_lik
    v_comb = 1.0 / prec
    m_comb = v_comb * (state.m_x_pri / state.v_x_pri + state.m_x_lik / state.v_x_lik)
    slack = 1.0 + 1e-6
    clamped = (
        (state.v_x_pri <= v_min * slack)
        | (state.v_x_pri >= v_max / slack)
        | (state.v_x_lik <= v_min * slack)
        | (state.v_x_lik >= v_max / slack)
        | (state.v_x_pos <= v_min * slack)
    )
    return np.abs(m_comb - state.x_pos), np.abs(v_comb - state.v_x_pos), clamped
