"""Scalar posterior computations and the message algebra built on them.

Everything is elementwise and vectorized; functions accept scalars or arrays
and follow numpy broadcasting. Densities and odds ratios are evaluated in the
log domain throughout.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import erf, erfcx, expit, logit

from .types import GroupStructure, HygecError, InvalidParameter

_SQRT2 = np.sqrt(2.0)
_SQRT_2_PI = np.sqrt(2.0 / np.pi)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Cell mass below exp(_LOG_TINY_MASS) is treated as numerically degenerate.
_LOG_TINY_MASS = np.log(1e-300)

# Standardized edge distance beyond which the direct erfcx variance formula
# loses too much precision (cancellation grows like a^4 * eps); switch to the
# asymptotic tail expansion there.
_SERIES_EDGE = 60.0

# Saturation distance used when a cell's mass underflows: the pull toward the
# cell is capped at this many standard deviations.
_CLAMP_SIGMAS = 37.0

PROB_FLOOR = 1e-15


class DegenerateCell(HygecError):
    pass


class Moments(NamedTuple):
    mean: np.ndarray | float
    var: np.ndarray | float


def z_posterior_awgn(y, m, v, noise_var) -> Moments:
    """Moments of z ~ N(m, v) given y = z + w, w ~ N(0, noise_var)."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    total = v + noise_var
    return Moments((v * y + noise_var * m) / total, v * noise_var / total)


def _tail_series(a):
    # E{zeta | zeta > a} and Var{zeta | zeta > a} for standard normal, a >> 1.
    inv2 = 1.0 / (a * a)
    mean = a + (1.0 / a) * (
        1.0 + inv2 * (-2.0 + inv2 * (10.0 + inv2 * (-74.0 + 706.0 * inv2)))
    )
    var = inv2 * (1.0 + inv2 * (-6.0 + inv2 * (50.0 - 518.0 * inv2)))
    return mean, var


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(80)


def _narrow_tail_cell(a, w):
    # Moments of u = zeta - a on [0, w] with density prop. to exp(-a*u - u^2/2),
    # for a >= _SERIES_EDGE and a cell narrow enough to retain two finite edges.
    # Fixed-order Gauss-Legendre on the tilted window; the integrand spans at
    # most ~e^-45 so 80 nodes resolve it to near machine precision.
    half = 0.5 * min(w, 45.0 / a)
    u = half * (_GL_NODES + 1.0)
    f = _GL_WEIGHTS * np.exp(-a * u - 0.5 * u * u)
    m0 = half * np.sum(f)
    m1 = half * np.sum(u * f)
    m2 = half * np.sum(u * u * f)
    mu = m1 / m0
    return mu, max(m2 / m0 - mu * mu, 0.0), np.log(m0)


def _std_trunc_moments(a, b):
    """Mean, variance, and log mass of a standard normal truncated to [a, b].

    Three regimes: edges straddling zero (plain erf arithmetic), both edges on
    one side (scaled-erfc ratios, reflected so a >= 0), and far tail
    (asymptotic series, or local quadrature when both edges are finite).
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    if np.any(a >= b):
        raise InvalidParameter("need lower < upper for every cell")

    mean = np.zeros(a.shape)
    var = np.ones(a.shape)
    log_mass = np.zeros(a.shape)

    flip = b <= 0.0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)

    mixed = a < 0.0
    if np.any(mixed):
        am, bm = a[mixed], b[mixed]
        z = 0.5 * (erf(bm / _SQRT2) - erf(am / _SQRT2))
        phi_a = np.exp(-0.5 * am * am) / np.sqrt(2 * np.pi)
        phi_b = np.exp(-0.5 * bm * bm) / np.sqrt(2 * np.pi)
        a_phi_a = np.where(np.isinf(am), 0.0, am) * phi_a
        b_phi_b = np.where(np.isinf(bm), 0.0, bm) * phi_b
        mu = (phi_a - phi_b) / z
        mean[mixed] = mu
        var[mixed] = 1.0 + (a_phi_a - b_phi_b) / z - mu * mu
        log_mass[mixed] = np.log(z)

    near = (~mixed) & (a < _SERIES_EDGE)
    if np.any(near):
        an, bn = a[near], b[near]
        fin = np.isfinite(bn)
        bs = np.where(fin, bn, an)  # placeholder where infinite
        expo = 0.5 * (an - bs) * (an + bs)
        e = np.where(fin, np.exp(expo), 0.0)
        one_minus_e = np.where(fin, -np.expm1(expo), 1.0)
        d = erfcx(an / _SQRT2) - e * erfcx(bs / _SQRT2)
        mu = _SQRT_2_PI * one_minus_e / d
        r2 = _SQRT_2_PI * (an - np.where(fin, bs * e, 0.0)) / d
        mean[near] = mu
        var[near] = np.maximum(1.0 + r2 - mu * mu, 0.0)
        log_mass[near] = -0.5 * an * an + np.log(0.5 * d)

    far = (~mixed) & (a >= _SERIES_EDGE)
    if np.any(far):
        for idx in np.flatnonzero(far):
            af, bf = a[idx], b[idx]
            # mass beyond bf is negligible next to the mass at af once the
            # exponent gap exceeds ~39 nats; the cell is then one-sided.
            if not np.isfinite(bf) or 0.5 * (bf - af) * (bf + af) > 40.0:
                mean[idx], var[idx] = _tail_series(af)
                log_mass[idx] = -0.5 * af * af + np.log(0.5 * erfcx(af / _SQRT2))
            else:
                mu_u, var_u, log_m0 = _narrow_tail_cell(af, bf - af)
                mean[idx] = af + mu_u
                var[idx] = var_u
                log_mass[idx] = -0.5 * af * af - _LOG_SQRT_2PI + log_m0

    mean = np.where(flip, -mean, mean)
    if scalar:
        return float(mean[0]), float(var[0]), float(log_mass[0])
    return mean, var, log_mass


def trunc_gauss_moments(lower, upper, m, v) -> tuple[Moments, np.ndarray]:
    """Moments and log mass of N(m, v) truncated to [lower, upper]."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise InvalidParameter("v must be positive")
    sigma = np.sqrt(v)
    alpha = (np.asarray(lower, dtype=float) - m) / sigma
    beta = (np.asarray(upper, dtype=float) - m) / sigma
    mu01, var01, log_mass = _std_trunc_moments(alpha, beta)
    return Moments(m + sigma * mu01, v * var01), log_mass


def z_posterior_quantized(cell, edges, m, v, noise_var) -> Moments:
    """Moments of z ~ N(m, v) given that z + w fell in quantizer cell `cell`.

    `edges` is the sorted edge vector of the quantizer (outer entries may be
    infinite); the observed cell spans edges[cell] .. edges[cell + 1].
    w ~ N(0, noise_var) with noise_var > 0.
    """
    if not np.all(np.asarray(noise_var) > 0):
        raise InvalidParameter("noise_var must be positive")
    edges = np.asarray(edges, dtype=float)
    cell = np.asarray(cell, dtype=np.int64)
    lower, upper = edges[cell], edges[cell + 1]
    moments, log_mass = _conditioned_on_sum_in(lower, upper, m, v, noise_var)
    if np.any(log_mass < _LOG_TINY_MASS):
        raise DegenerateCell("cell probability underflowed; caller should clamp")
    return moments


def _conditioned_on_sum_in(lower, upper, m, v, noise_var):
    # z ~ N(m, v), s = z + w ~ N(m, v + noise_var); conditioning on s in
    # [lower, upper] truncates s, and z given s is Gaussian with slope
    # gamma = v / (v + noise_var):
    #   E{z}   = m + gamma (E{s} - m)
    #   Var{z} = gamma^2 Var{s} + v noise_var / (v + noise_var)
    v = np.asarray(v, dtype=float)
    m = np.asarray(m, dtype=float)
    total = v + noise_var
    (s_mean, s_var), log_mass = trunc_gauss_moments(lower, upper, m, total)
    gamma = v / total
    mean = m + gamma * (s_mean - m)
    var = gamma * gamma * s_var + v * noise_var / total
    return Moments(mean, var), log_mass


def channel_posterior(channel, y, m, v) -> Moments:
    """Vector z-denoiser for a whole observation under either channel kind.

    Never raises on underflowing cells: the standardized cell is shifted so
    its near edge sits at the saturation distance, capping the pull while
    keeping the run alive.
    """
    if channel.kind == "linear":
        return z_posterior_awgn(y, m, v, channel.noise_var)
    lower, upper = channel.cell_bounds(y)
    m = np.broadcast_to(np.asarray(m, dtype=float), lower.shape)
    v = np.broadcast_to(np.asarray(v, dtype=float), lower.shape)
    moments, log_mass = _conditioned_on_sum_in(lower, upper, m, v, channel.noise_var)
    bad = log_mass < _LOG_TINY_MASS
    if not np.any(bad):
        return moments
    # degenerate cells lie entirely on one side of the prior; slide each one
    # (preserving width) until its near edge sits at the saturation distance
    sigma_s = np.sqrt(v[bad] + channel.noise_var)
    lo, up, mb = lower[bad], upper[bad], m[bad]
    alpha = (lo - mb) / sigma_s
    beta = (up - mb) / sigma_s
    shift = np.where(alpha > 0, alpha - _CLAMP_SIGMAS, -_CLAMP_SIGMAS - beta) * sigma_s
    fixed, _ = _conditioned_on_sum_in(
        np.where(alpha > 0, lo - shift, lo + shift),
        np.where(alpha > 0, up - shift, up + shift),
        mb, v[bad], channel.noise_var,
    )
    mean = np.asarray(moments.mean).copy()
    var = np.asarray(moments.var).copy()
    mean[bad] = fixed.mean
    var[bad] = fixed.var
    return Moments(mean, var)


def x_posterior_spike_slab(m, v, rho_hat, sigma_x_sq) -> tuple[Moments, np.ndarray]:
    """Posterior under the prior rho*N(0, sigma_x_sq) + (1-rho)*delta(0).

    Returns the moments and the posterior activity probability pi.
    """
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    rho_hat = np.asarray(rho_hat, dtype=float)
    if np.any(v <= 0):
        raise InvalidParameter("v must be positive")
    total = sigma_x_sq + v
    # log N(0|m, total) - log N(0|m, v), the slab-vs-spike evidence ratio
    llr_ev = 0.5 * (np.log(v) - np.log(total)) + 0.5 * m * m * (1.0 / v - 1.0 / total)
    safe_rho = np.clip(rho_hat, PROB_FLOOR, 1.0 - PROB_FLOOR)
    pi = expit(logit(safe_rho) + llr_ev)
    pi = np.where(rho_hat == 0.0, 0.0, np.where(rho_hat == 1.0, 1.0, pi))
    mu_slab = m * sigma_x_sq / total
    v_slab = sigma_x_sq * v / total
    mean = pi * mu_slab
    var = pi * v_slab + pi * (1.0 - pi) * mu_slab * mu_slab
    return Moments(mean, var), pi


def extrinsic(pos: Moments, cav: Moments, v_min: float, v_max: float) -> Moments:
    """Divide the posterior Gaussian by the cavity Gaussian, with variance clamps.

    A nonpositive precision difference saturates the variance at v_max instead
    of failing.
    """
    pos_mean = np.asarray(pos.mean, dtype=float)
    pos_var = np.asarray(pos.var, dtype=float)
    cav_mean = np.asarray(cav.mean, dtype=float)
    cav_var = np.asarray(cav.var, dtype=float)
    prec = 1.0 / pos_var - 1.0 / cav_var
    with np.errstate(divide="ignore", over="ignore"):
        var = np.where(prec > 0.0, np.clip(1.0 / np.where(prec > 0, prec, 1.0), v_min, v_max), v_max)
    mean = var * (pos_mean / pos_var - cav_mean / cav_var)
    return Moments(mean, var)


def _element_llr(m_x_lik, v_x_lik, sigma_x_sq):
    # log N(0|m, sigma_x_sq + v) - log N(0|m, v) per element
    v = np.asarray(v_x_lik, dtype=float)
    m = np.asarray(m_x_lik, dtype=float)
    total = sigma_x_sq + v
    return 0.5 * (np.log(v) - np.log(total)) + 0.5 * m * m * (1.0 / v - 1.0 / total)


def llr_messages(m_x_lik, v_x_lik, rho, sigma_x_sq, groups: GroupStructure) -> np.ndarray:
    """Per-element activity probabilities from the indicator subgraph.

    Each element receives the group belief minus its own contribution (the
    extrinsic rule), so its own evidence never feeds back to itself.
    """
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    v = np.asarray(v_x_lik, dtype=float)
    if np.any(v <= 0):
        raise InvalidParameter("v_x_lik must be positive")
    llr_in = _element_llr(m_x_lik, v_x_lik, sigma_x_sq)
    group_sum = np.add.reduceat(llr_in, groups.offsets)
    llr_k = logit(rho) + group_sum
    llr_out = llr_k[groups.group_of] - llr_in
    return np.clip(expit(llr_out), PROB_FLOOR, 1.0 - PROB_FLOOR)


def indicator_beliefs(m_x_lik, v_x_lik, rho, sigma_x_sq, groups: GroupStructure) -> np.ndarray:
    """Length-K posterior activity beliefs combining the prior and all evidence."""
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    llr_in = _element_llr(m_x_lik, v_x_lik, sigma_x_sq)
    group_sum = np.add.reduceat(llr_in, groups.offsets)
    return expit(logit(rho) + group_sum)
