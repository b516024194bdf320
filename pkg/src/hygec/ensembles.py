"""Synthetic problem generation: matrices, group-sparse signals, channel outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Channel, GroupStructure, InvalidParameter


@dataclass(frozen=True)
class MatrixSpec:
    """Recipe for drawing a measurement matrix.

    kind "iid": entries N(mean, 1/M).
    kind "conditioned": H = U diag(s) V^T with Haar factors and a geometric
    singular-value profile whose extreme ratio equals kappa.
    """

    kind: str  # "iid" | "conditioned"
    m: int
    n: int
    mean: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("iid", "conditioned"):
            raise InvalidParameter(f"unknown matrix kind {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise InvalidParameter("matrix dimensions must be positive")
        if self.m > self.n:
            raise InvalidParameter("need m <= n")
        if self.kind == "conditioned":
            if not self.kappa >= 1:
                raise InvalidParameter("kappa must be >= 1")
            if self.m == 1 and self.kappa != 1:
                raise InvalidParameter("a 1-row matrix cannot have kappa > 1")


def haar_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign-corrected R diagonal."""
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def geometric_spectrum(m: int, kappa: float) -> np.ndarray:
    """M singular values in geometric progression, max/min = kappa, sum of squares = M."""
    if m == 1:
        if kappa != 1:
            raise InvalidParameter("a single singular value cannot realize kappa > 1")
        return np.ones(1)
    ratio = kappa ** (1.0 / (m - 1))
    s = ratio ** np.arange(m - 1, -1, -1, dtype=float)
    return s * np.sqrt(m / np.sum(s**2))


def gen_matrix(spec: MatrixSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "iid":
        return spec.mean + rng.standard_normal((spec.m, spec.n)) / np.sqrt(spec.m)
    s = geometric_spectrum(spec.m, spec.kappa)
    u = haar_orthogonal(spec.m, rng)
    v = haar_orthogonal(spec.n, rng)
    return (u * s) @ v[: spec.m, :]


def gen_group_sparse_signal(
    groups: GroupStructure, rho: float, sigma_x_sq: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x, xi): per-group Bernoulli(rho) indicators, active groups N(0, sigma_x_sq).

    Draw order is fixed (indicators first, then a full-length normal vector)
    so seeded streams stay reproducible across group layouts.
    """
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    if not sigma_x_sq > 0:
        raise InvalidParameter("sigma_x_sq must be positive")
    xi = (rng.random(groups.k) < rho).astype(np.int64)
    x = rng.standard_normal(groups.n) * np.sqrt(sigma_x_sq)
    x *= np.repeat(xi, groups.group_sizes)
    return x, xi


def apply_channel(
    H: np.ndarray, x: np.ndarray, channel: Channel, rng: np.random.Generator
) -> np.ndarray:
    """Push x through the channel: y = Hx + w, optionally quantized to cell indices.

    Noise is drawn even when noise_var == 0 so streams match across noise levels.
    """
    z = H @ x
    w = rng.standard_normal(z.shape[0]) * np.sqrt(channel.noise_var)
    out = z + w
    if channel.kind == "quantized":
        return channel.quantize(out)
    return out


def snr_to_noise_var(H: np.ndarray, rho: float, sigma_x_sq: float, snr_db: float) -> float:
    """Noise variance giving the requested SNR for the group-sparse source.

    Per-measurement signal power is rho * sigma_x_sq * ||H||_F^2 / M.
    """
    m = H.shape[0]
    signal_power = rho * sigma_x_sq * float(np.sum(H**2)) / m
    return signal_power / 10.0 ** (snr_db / 10.0)


def default_clip_range(H: np.ndarray, rho: float, sigma_x_sq: float, noise_var: float) -> float:
    """Quantizer saturation level: three standard deviations of the pre-quantizer output."""
    m = H.shape[0]
    var_z = rho * sigma_x_sq * float(np.sum(H**2)) / m
    return 3.0 * np.sqrt(var_z + noise_var)
