"""Length-dependent curve hyperparameters, basis caching, and the
embedding <-> curve mappings.

The number of control points scales with sentence length through
``n_ratio``; the degree comes either from a ratio of N or a fixed value.
Pairs are precomputed once per length and reused, since B and B_pinv
depend only on (L, N, eta, margin).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import splines
from .errors import ConfigError, LengthOutOfRange, ShapeMismatch
from .rng import RngStream
from .splines import BasisPair


@dataclass(frozen=True)
class CurveConfig:
    n_ratio: float = 2.0
    eta_ratio: float | None = 0.1
    eta_fixed: int | None = None
    k_curves: int = 1
    margin: float = 0.01
    l_min: int = 2
    l_max: int = 250
    rcond: float | None = None
    allow_dynamic: bool = False
    identity: bool = False

    def __post_init__(self):
        if self.n_ratio <= 0:
            raise ConfigError(f"n_ratio must be positive, got {self.n_ratio}")
        if self.k_curves < 1:
            raise ConfigError(f"k_curves must be >= 1, got {self.k_curves}")
        if not 2 <= self.l_min <= self.l_max:
            raise ConfigError(f"need 2 <= l_min <= l_max, got [{self.l_min}, {self.l_max}]")
        if (self.eta_ratio is None) == (self.eta_fixed is None):
            raise ConfigError("exactly one of eta_ratio / eta_fixed must be set")


def resolve_dims(length: int, config: CurveConfig, check_range: bool = True) -> tuple[int, int]:
    """Control-point count and degree for a sentence of length L.

    N = trunc(L * n_ratio) clamped to >= 2.  The degree is either
    max(trunc(N * eta_ratio), 2) or the fixed value, then clamped into
    [1, N-1] so the clamped knot vector stays valid for short sentences.
    """
    if check_range and not config.l_min <= length <= config.l_max:
        raise LengthOutOfRange(f"length {length} outside [{config.l_min}, {config.l_max}]")
    n_points = max(int(length * config.n_ratio), 2)
    if config.eta_fixed is not None:
        eta = config.eta_fixed
    else:
        eta = max(int(n_points * config.eta_ratio), 2)
    eta = max(min(eta, n_points - 1), 1)
    return n_points, eta


class BasisCache:
    """Immutable map from sentence length to its BasisPair."""

    def __init__(self, config: CurveConfig, pairs: dict[int, BasisPair]):
        self.config = config
        self._pairs = pairs

    def __len__(self) -> int:
        return len(self._pairs)

    def __contains__(self, length: int) -> bool:
        return length in self._pairs

    def lengths(self) -> list[int]:
        return sorted(self._pairs)

    def get(self, length: int) -> BasisPair:
        pair = self._pairs.get(length)
        if pair is None:
            if self.config.allow_dynamic and length >= 2:
                pair = _make_pair(length, self.config, check_range=False)
                self._pairs[length] = pair
            else:
                raise LengthOutOfRange(f"no cached basis for length {length}")
        return pair


def _make_pair(length: int, config: CurveConfig, check_range: bool = True) -> BasisPair:
    if config.identity:
        return splines.identity_pair(length)
    n_points, eta = resolve_dims(length, config, check_range)
    return splines.build_pair(length, n_points, eta, config.margin, config.rcond)


def build_cache(config: CurveConfig) -> BasisCache:
    """Precompute one BasisPair per length in [l_min, l_max]."""
    pairs = {length: _make_pair(length, config) for length in range(config.l_min, config.l_max + 1)}
    return BasisCache(config, pairs)


@dataclass(frozen=True)
class SentenceCurve:
    """Control points (d, N) together with the sentence length they encode."""

    points: np.ndarray
    length_l: int


@dataclass(frozen=True)
class EmbeddingSequence:
    """Word-embedding matrix (d, L); clean, noised, or denoised."""

    values: np.ndarray

    @property
    def length(self) -> int:
        return self.values.shape[1]


def embed_to_curve(embeds: EmbeddingSequence, cache: BasisCache) -> SentenceCurve:
    """Approximate inverse mapping P = E @ B_pinv."""
    length = embeds.length
    pair = cache.get(length)
    if embeds.values.ndim != 2:
        raise ShapeMismatch(f"expected a (d, L) matrix, got shape {embeds.values.shape}")
    return SentenceCurve(points=embeds.values @ pair.B_pinv, length_l=length)


def curve_to_embed(curve: SentenceCurve, cache: BasisCache) -> EmbeddingSequence:
    """Forward mapping E = P @ B."""
    pair = cache.get(curve.length_l)
    if curve.points.ndim != 2 or curve.points.shape[1] != pair.N:
        raise ShapeMismatch(f"control points have shape {curve.points.shape}, expected (*, {pair.N})")
    return EmbeddingSequence(values=curve.points @ pair.B)


def reconstruction_error(
    length: int,
    config: CurveConfig,
    trials: int = 100,
    seed: int = 0,
    dim: int = 16,
) -> float:
    """Mean squared error of the E -> P -> E round trip on Gaussian noise.

    Noise streams are keyed by (seed, length, trial) only, so sweeps over
    curve hyperparameters compare configurations on identical inputs.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    pair = _make_pair(length, config)
    proj = pair.B_pinv @ pair.B
    total = 0.0
    base = RngStream(seed, "recon", length)
    for trial in range(trials):
        values = base.child(trial).normal((dim, length))
        recon = values @ proj
        total += float(np.mean((values - recon) ** 2))
    return total / trials


@dataclass(frozen=True)
class SweepRow:
    length: int
    n_ratio: float
    eta_ratio: float
    mse: float


@dataclass(frozen=True)
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["L,n_ratio,eta_ratio,mse"]
        for row in self.rows:
            lines.append(f"{row.length},{row.n_ratio!r},{row.eta_ratio!r},{row.mse!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = [
            {"L": row.length, "n_ratio": row.n_ratio, "eta_ratio": row.eta_ratio, "mse": row.mse}
            for row in self.rows
        ]
        return json.dumps(payload, indent=2)


DEFAULT_SWEEP_LENGTHS = tuple(range(25, 251, 25))
DEFAULT_SWEEP_N_RATIOS = (1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_SWEEP_ETA_RATIOS = (0.0, 0.33, 0.66)


def reconstruction_sweep(
    lengths=DEFAULT_SWEEP_LENGTHS,
    n_ratios=DEFAULT_SWEEP_N_RATIOS,
    eta_ratios=DEFAULT_SWEEP_ETA_RATIOS,
    trials: int = 100,
    seed: int = 0,
    dim: int = 16,
    margin: float = 0.01,
) -> SweepTable:
    """Round-trip error over the full (L, n_ratio, eta_ratio) grid.

    Row order is the cross product with L outermost and eta_ratio
    innermost.  The minimum degree of 2 comes from the eta formula in
    resolve_dims, so eta_ratio = 0.0 still uses quadratic bases.
    """
    if not (lengths and n_ratios and eta_ratios):
        raise ConfigError("sweep sets must be non-empty")
    rows = []
    for length in lengths:
        for n_ratio in n_ratios:
            for eta_ratio in eta_ratios:
                config = CurveConfig(
                    n_ratio=n_ratio,
                    eta_ratio=eta_ratio,
                    margin=margin,
                    l_min=2,
                    l_max=max(length, 250),
                )
                mse = reconstruction_error(length, config, trials=trials, seed=seed, dim=dim)
                rows.append(SweepRow(length=length, n_ratio=n_ratio, eta_ratio=eta_ratio, mse=mse))
    return SweepTable(rows=rows)
