"""Shared builders for the test suite.

Instances are generated with the same substream layout the benchmark runner
uses (matrix/signal/noise split per seed), so expectations frozen here carry
over to scenario runs unchanged.
"""

from __future__ import annotations

import numpy as np

from hygec.ensembles import (
    MatrixSpec,
    apply_channel,
    gen_group_sparse_signal,
    gen_matrix,
    snr_to_noise_var,
)
from hygec.types import Channel, GroupStructure, ProblemInstance

ROLE_MATRIX = 0
ROLE_SIGNAL = 1
ROLE_NOISE = 2


def seeded(seed: int, role: int) -> np.random.Generator:
    return np.random.default_rng([seed, role])


def make_linear_instance(
    seed: int,
    m: int,
    n: int,
    k: int,
    rho: float,
    snr_db: float,
    sigma_x_sq: float = 1.0,
) -> ProblemInstance:
    groups = GroupStructure.even(n, k)
    H = gen_matrix(MatrixSpec("iid", m, n), seeded(seed, ROLE_MATRIX))
    x, xi = gen_group_sparse_signal(groups, rho, sigma_x_sq, seeded(seed, ROLE_SIGNAL))
    noise_var = snr_to_noise_var(H, rho, sigma_x_sq, snr_db)
    channel = Channel.linear_awgn(noise_var)
    y = apply_channel(H, x, channel, seeded(seed, ROLE_NOISE))
    return ProblemInstance(
        H=H, y=y, groups=groups, channel=channel, sigma_x_sq=sigma_x_sq,
        x_true=x, xi_true=xi, true_rho=rho,
    )


def planted_count(inst: ProblemInstance) -> int:
    return int(np.sum(inst.xi_true))
