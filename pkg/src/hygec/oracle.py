"""Brute-force reference implementations.

Everything here trades speed for independence: quadrature instead of closed
forms, full enumeration instead of message passing. Used by tests to pin
expected values and by the CLI `check` subcommand.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .denoisers import Moments
from .types import HygecError, InvalidParameter, ProblemInstance


class ZeroMass(HygecError):
    pass


class Unsupported(HygecError):
    pass


class AllZeroTruth(HygecError):
    pass


@dataclass(frozen=True)
class QuadGrid:
    half_width_sigmas: float = 10.0
    points: int = 200_001

    def __post_init__(self):
        if self.points < 10_000:
            raise InvalidParameter("need at least 1e4 grid points")
        if self.half_width_sigmas < 8:
            raise InvalidParameter("grid must span at least 8 standard deviations")


def quad_z_posterior(likelihood, m: float, v: float, grid: QuadGrid | None = None) -> Moments:
    """Posterior moments of z ~ N(m, v) under a pointwise likelihood, by trapezoid rule.

    Integrates in centered coordinates and uses a two-pass variance so the
    result stays accurate when the posterior is much narrower than |m|.
    """
    if grid is None:
        grid = QuadGrid()
    if not v > 0:
        raise InvalidParameter("v must be positive")
    sigma = np.sqrt(v)
    u = np.linspace(-grid.half_width_sigmas * sigma, grid.half_width_sigmas * sigma, grid.points)
    f = np.asarray(likelihood(m + u), dtype=float) * np.exp(-u * u / (2.0 * v))
    z_mass = np.trapezoid(f, u)
    if not z_mass > 1e-300:
        raise ZeroMass("posterior normalizer underflowed on the quadrature grid")
    mean_u = np.trapezoid(u * f, u) / z_mass
    var = np.trapezoid((u - mean_u) ** 2 * f, u) / z_mass
    return Moments(m + mean_u, var)


def exact_posterior_small(
    inst: ProblemInstance, rho: float, sigma_x_sq: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact posterior by enumerating all 2^K group-activity patterns.

    Conditioned on a pattern, the active coefficients are jointly Gaussian, so
    the full posterior is a mixture of 2^K Gaussians weighted by evidence.
    Returns (x_mean, x_var, xi_post).
    """
    if inst.channel.kind != "linear":
        raise Unsupported("exact enumeration handles the linear channel only")
    k = inst.groups.k
    if k > 12:
        raise Unsupported(f"2^{k} patterns is past the exactness budget (K <= 12)")
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    H = np.asarray(inst.H, dtype=float)
    y = np.asarray(inst.y, dtype=float)
    m, n = H.shape
    noise_var = inst.channel.noise_var
    if not noise_var > 0:
        raise InvalidParameter("exact posterior needs noise_var > 0")
    slices = inst.groups.slices()

    log_w = np.empty(1 << k)
    means: list[np.ndarray] = []
    variances: list[np.ndarray] = []
    actives: list[np.ndarray] = []
    base = -0.5 * m * np.log(2.0 * np.pi * noise_var) - 0.5 * np.dot(y, y) / noise_var
    for p, pattern in enumerate(itertools.product((0, 1), repeat=k)):
        active = np.concatenate(
            [np.arange(sl.start, sl.stop) for xi, sl in zip(pattern, slices) if xi]
        ) if any(pattern) else np.empty(0, dtype=np.intp)
        n_a = active.size
        log_prior = np.log(rho) * sum(pattern) + np.log1p(-rho) * (k - sum(pattern))
        if n_a == 0:
            log_w[p] = base + log_prior
            means.append(np.empty(0))
            variances.append(np.empty(0))
            actives.append(active)
            continue
        Ha = H[:, active]
        prec = Ha.T @ Ha / noise_var + np.eye(n_a) / sigma_x_sq
        b = Ha.T @ y / noise_var
        cov = np.linalg.inv(prec)
        mu = cov @ b
        _, logdet_prec = np.linalg.slogdet(prec)
        log_w[p] = (
            base
            + log_prior
            - 0.5 * n_a * np.log(sigma_x_sq)
            - 0.5 * logdet_prec
            + 0.5 * np.dot(b, mu)
        )
        means.append(mu)
        variances.append(np.diag(cov).copy())
        actives.append(active)

    log_z = logsumexp(log_w)
    w = np.exp(log_w - log_z)

    x_mean = np.zeros(n)
    x_second = np.zeros(n)
    xi_post = np.zeros(k)
    for p, pattern in enumerate(itertools.product((0, 1), repeat=k)):
        if w[p] == 0.0 or actives[p].size == 0:
            continue
        x_mean[actives[p]] += w[p] * means[p]
        x_second[actives[p]] += w[p] * (variances[p] + means[p] ** 2)
        for kk, xi in enumerate(pattern):
            if xi:
                xi_post[kk] += w[p]
    x_var = np.maximum(x_second - x_mean**2, 0.0)
    return x_mean, x_var, xi_post


def nmse(x_hat: np.ndarray, x_true: np.ndarray) -> float:
    """Normalized squared error in dB, floored at -300."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    denom = float(np.dot(x_true, x_true))
    if denom == 0.0:
        raise AllZeroTruth("NMSE is undefined for an all-zero truth")
    diff = x_hat - x_true
    ratio = float(np.dot(diff, diff)) / denom
    if ratio <= 1e-30:
        return -300.0
    return max(10.0 * np.log10(ratio), -300.0)
