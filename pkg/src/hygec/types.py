"""Shared domain types and invariant checks. No algorithms live here."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


class HygecError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(HygecError):
    pass


class GroupCoverage(HygecError):
    pass


class SupportViolation(HygecError):
    pass


class InvalidParameter(HygecError):
    pass


@dataclass(frozen=True)
class GroupStructure:
    """Partition of the flat index range 0..N into K contiguous groups."""

    group_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if len(self.group_sizes) < 1:
            raise GroupCoverage("need at least one group")
        if any(s < 1 for s in self.group_sizes):
            raise GroupCoverage("every group must have at least one element")

    @property
    def k(self) -> int:
        return len(self.group_sizes)

    @property
    def n(self) -> int:
        return sum(self.group_sizes)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start index of each group; offsets[k] .. offsets[k]+N_k covers group k."""
        return np.concatenate(([0], np.cumsum(self.group_sizes)[:-1])).astype(np.intp)

    @cached_property
    def group_of(self) -> np.ndarray:
        """group_of[i] = index of the group containing flat index i."""
        return np.repeat(np.arange(self.k), self.group_sizes)

    def flat_to_pair(self, i: int) -> tuple[int, int]:
        """Map flat index i to (group index, position within group)."""
        if not 0 <= i < self.n:
            raise IndexError(i)
        k = int(self.group_of[i])
        return k, i - int(self.offsets[k])

    def pair_to_flat(self, k: int, j: int) -> int:
        if not 0 <= k < self.k or not 0 <= j < self.group_sizes[k]:
            raise IndexError((k, j))
        return int(self.offsets[k]) + j

    def slices(self) -> list[slice]:
        off = self.offsets
        return [slice(int(off[k]), int(off[k]) + self.group_sizes[k]) for k in range(self.k)]

    @staticmethod
    def even(n: int, k: int) -> "GroupStructure":
        """Split 0..n into k groups as evenly as possible (first n % k groups get one extra)."""
        if k < 1 or n < k:
            raise GroupCoverage(f"cannot split {n} indices into {k} nonempty groups")
        base, extra = divmod(n, k)
        return GroupStructure(tuple(base + (1 if i < extra else 0) for i in range(k)))


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Per-element activity probabilities and the shared slab variance."""

    rho_hat: np.ndarray
    sigma_x_sq: float

    def __post_init__(self):
        rho = np.asarray(self.rho_hat, dtype=float)
        object.__setattr__(self, "rho_hat", rho)
        if np.any(rho < 0) or np.any(rho > 1):
            raise InvalidParameter("activity probabilities must lie in [0, 1]")
        if not self.sigma_x_sq > 0:
            raise InvalidParameter("slab variance must be positive")


@dataclass(frozen=True)
class Channel:
    """Output model: linear-AWGN, or a B-bit uniform mid-rise quantizer over AWGN.

    The quantizer has 2^B cells over [-clip_range, clip_range] with the two
    outer cells unbounded; observations are stored as integer cell indices.
    """

    kind: str  # "linear" | "quantized"
    noise_var: float
    bits: int | None = None
    clip_range: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "quantized"):
            raise InvalidParameter(f"unknown channel kind {self.kind!r}")
        if not self.noise_var >= 0:
            raise InvalidParameter("noise_var must be nonnegative")
        if self.kind == "quantized":
            if self.bits is None or self.bits < 1:
                raise InvalidParameter("quantized channel needs bits >= 1")
            if self.clip_range is None or not self.clip_range > 0:
                raise InvalidParameter("quantized channel needs clip_range > 0")

    @staticmethod
    def linear_awgn(noise_var: float) -> "Channel":
        return Channel("linear", float(noise_var))

    @staticmethod
    def quantized(noise_var: float, bits: int, clip_range: float) -> "Channel":
        return Channel("quantized", float(noise_var), int(bits), float(clip_range))

    @property
    def n_cells(self) -> int:
        return 1 << self.bits

    @cached_property
    def edges(self) -> np.ndarray:
        """Cell edges, length 2^B + 1; edges[0] = -inf, edges[-1] = +inf."""
        c = self.clip_range
        inner = np.linspace(-c, c, self.n_cells + 1)[1:-1]
        return np.concatenate(([-np.inf], inner, [np.inf]))

    def quantize(self, values: np.ndarray) -> np.ndarray:
        """Map real values to cell indices in 0..2^B-1."""
        width = 2.0 * self.clip_range / self.n_cells
        idx = np.floor((np.asarray(values) + self.clip_range) / width).astype(np.int64)
        return np.clip(idx, 0, self.n_cells - 1)

    def cell_bounds(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper edges of the cells indexed by y."""
        y = np.asarray(y, dtype=np.int64)
        if np.any(y < 0) or np.any(y >= self.n_cells):
            raise InvalidParameter("cell index out of range")
        return self.edges[y], self.edges[y + 1]


@dataclass(frozen=True)
class ProblemInstance:
    """One recovery problem: measurement matrix, observation, and the generative model."""

    H: np.ndarray
    y: np.ndarray
    groups: GroupStructure
    channel: Channel
    sigma_x_sq: float
    x_true: np.ndarray | None = None
    xi_true: np.ndarray | None = None
    true_rho: float | None = None

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]


def validate_instance(inst: ProblemInstance) -> None:
    """Raise the named error for the first violated ProblemInstance invariant."""
    H = np.asarray(inst.H)
    if H.ndim != 2:
        raise DimensionMismatch("H must be a 2-d matrix")
    m, n = H.shape
    if np.asarray(inst.y).shape != (m,):
        raise DimensionMismatch(f"y must have length {m}")
    if inst.groups.n != n:
        raise GroupCoverage(f"group sizes sum to {inst.groups.n}, expected {n}")
    if inst.x_true is not None and np.asarray(inst.x_true).shape != (n,):
        raise DimensionMismatch(f"x_true must have length {n}")
    if inst.xi_true is not None:
        xi = np.asarray(inst.xi_true)
        if xi.shape != (inst.groups.k,):
            raise DimensionMismatch(f"xi_true must have length {inst.groups.k}")
        if inst.x_true is not None:
            x = np.asarray(inst.x_true)
            for k, sl in enumerate(inst.groups.slices()):
                if xi[k] == 0 and np.any(x[sl] != 0):
                    raise SupportViolation(f"group {k} is inactive but x_true is nonzero there")
    if inst.channel.kind == "quantized":
        y = np.asarray(inst.y)
        if np.any(y < 0) or np.any(y >= inst.channel.n_cells):
            raise DimensionMismatch("quantized observations must be valid cell indices")
    if inst.true_rho is not None and not 0 < inst.true_rho < 1:
        raise InvalidParameter("true_rho must lie in (0, 1)")
    if not inst.sigma_x_sq > 0:
        raise InvalidParameter("sigma_x_sq must be positive")


@dataclass
class GecState:
    """Message state owned by a single recovery run.

    Mean/variance pairs for z and x, each split into the prior-side and
    likelihood-side Gaussian messages, plus the activity messages and the
    current posterior estimate of x.
    """

    m_z_pri: np.ndarray
    v_z_pri: np.ndarray
    m_z_lik: np.ndarray
    v_z_lik: np.ndarray
    m_x_pri: np.ndarray
    v_x_pri: np.ndarray
    m_x_lik: np.ndarray
    v_x_lik: np.ndarray
    rho_hat: np.ndarray
    x_pos: np.ndarray
    v_x_pos: np.ndarray
    t: int = 0

    def copy(self) -> "GecState":
        return GecState(
            self.m_z_pri.copy(), self.v_z_pri.copy(),
            self.m_z_lik.copy(), self.v_z_lik.copy(),
            self.m_x_pri.copy(), self.v_x_pri.copy(),
            self.m_x_lik.copy(), self.v_x_lik.copy(),
            self.rho_hat.copy(), self.x_pos.copy(), self.v_x_pos.copy(), self.t,
        )

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a))
            for a in (self.m_z_pri, self.v_z_pri, self.m_z_lik, self.v_z_lik,
                      self.m_x_pri, self.v_x_pri, self.m_x_lik, self.v_x_lik,
                      self.rho_hat, self.x_pos, self.v_x_pos)
        )


@dataclass
class RecoveryReport:
    """Per-run bookkeeping: traces, iteration counts, and how the run ended."""

    x_hat: np.ndarray
    nmse_trace: list[float] = field(default_factory=list)
    rho_trace: list[float] = field(default_factory=list)
    inner_iterations: int = 0
    outer_iterations: int = 0
    termination: str = CONVERGED
    inner_counts: list[int] = field(default_factory=list)
