"""Seeded synthetic customer populations with known latent intent.

Four archetypes generate the three observed segments:

* prompted-engaged: buys only when nudged, so it is observed as Engaged when
  exposed and as Inactive otherwise;
* organic-engaged: buys regardless and also clicked the campaign when exposed;
* organic-unengaged: buys without campaign interaction;
* inactive: neither engages nor buys recently.

Organic-engaged and organic-unengaged customers share one feature
distribution, which is what makes the Engaged label an unreliable proxy for
prompted intent.

Exposure is an independent Bernoulli draw per customer (``exposure_rate`` for
organic/inactive customers, ``prompted_exposure_rate`` for prompted ones).
This is a modelling assumption: historical exposure assignment is unknown.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .domain import ChurnStatus, Dataset, LatentIntent, SegmentLabel


class ConfigError(ValueError):
    """Raised for an invalid generator or run configuration."""


class Archetype(enum.IntEnum):
    PROMPTED_ENGAGED = 0
    ORGANIC_ENGAGED = 1
    ORGANIC_UNENGAGED = 2
    INACTIVE = 3


@dataclass(frozen=True)
class GenConfig:
    n_customers: int = 50_000
    feature_dim: int = 16
    archetype_mix: tuple[float, float, float, float] = (0.15, 0.15, 0.30, 0.40)
    feature_separation: float = 2.0
    noise_scale: float = 1.0
    exposure_rate: float = 0.5
    prompted_exposure_rate: float = 1.0
    churn_fraction: float = 0.4
    horizon: int = 365
    seed: int = 0

    def validate(self) -> None:
        mix = self.archetype_mix
        if len(mix) != 4:
            raise ConfigError(f"archetype_mix needs 4 entries, got {len(mix)}")
        if any(not (0.0 <= p <= 1.0) for p in mix) or abs(math.fsum(mix) - 1.0) > 1e-12:
            raise ConfigError(f"archetype_mix must be probabilities summing to 1, got {mix}")
        if self.n_customers < 1 or self.feature_dim < 1:
            raise ConfigError("n_customers and feature_dim must be positive")
        if self.feature_separation < 0:
            raise ConfigError("feature_separation must be >= 0")
        if not self.noise_scale > 0:
            raise ConfigError("noise_scale must be > 0")
        for name in ("exposure_rate", "prompted_exposure_rate", "churn_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# Mean offsets in units of ``feature_separation`` for the three feature blocks
# (customer understanding, engagement, transactions).
_BLOCK_PATTERN = np.array([
    [0.6, 0.3, 0.0],    # prompted-engaged
    [0.0, 0.0, 0.5],    # organic-engaged
    [0.0, 0.0, 0.5],    # organic-unengaged
    [0.0, -1.0, -1.0],  # inactive
])

# Transaction profile per archetype: Poisson count rate, mean amount, recency
# skew (>1 concentrates purchases late in the horizon) and the latest possible
# purchase day as a fraction of the horizon.
_TXN_RATE = np.array([5.0, 6.0, 6.0, 0.4])
_TXN_AMOUNT = np.array([25.0, 60.0, 60.0, 40.0])
_TXN_RECENT_SKEW = np.array([2.0, 1.0, 1.0, 1.0])
_TXN_LAST_DAY_FRAC = np.array([1.0, 1.0, 1.0, 0.4])


def archetype_means(cfg: GenConfig) -> np.ndarray:
    """(4, d) matrix of archetype feature means."""
    blocks = np.array_split(np.arange(cfg.feature_dim), 3)
    means = np.zeros((4, cfg.feature_dim))
    for j, cols in enumerate(blocks):
        means[:, cols] = _BLOCK_PATTERN[:, j:j + 1]
    return cfg.feature_separation * means


def derive_behavior_labels(archetype, exposed) -> np.ndarray:
    """Observed segment codes implied by archetype and exposure.

    An unexposed organic-engaged customer still buys, so is observed as
    Unengaged; an unexposed prompted customer does not, so is Inactive.
    """
    archetype = np.asarray(archetype)
    exposed = np.asarray(exposed, dtype=bool)
    seg = np.full(archetype.shape, int(SegmentLabel.INACTIVE), dtype=np.int8)
    engaged = ((archetype == Archetype.PROMPTED_ENGAGED) | (archetype == Archetype.ORGANIC_ENGAGED)) & exposed
    seg[engaged] = SegmentLabel.ENGAGED
    seg[archetype == Archetype.ORGANIC_UNENGAGED] = SegmentLabel.UNENGAGED
    seg[(archetype == Archetype.ORGANIC_ENGAGED) & ~exposed] = SegmentLabel.UNENGAGED
    return seg


def expected_mislabel_rate(cfg: GenConfig) -> float:
    """Expected share of stage-2 positives (Engaged) whose intent is organic."""
    pe, oe = cfg.archetype_mix[0], cfg.archetype_mix[1]
    prompted = pe * cfg.prompted_exposure_rate
    organic = oe * cfg.exposure_rate
    return organic / (prompted + organic) if prompted + organic > 0 else float("nan")


def generate_population(cfg: GenConfig) -> Dataset:
    """Draw a population; the whole draw comes from one PCG64 stream seeded by ``cfg.seed``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, d, H = cfg.n_customers, cfg.feature_dim, cfg.horizon

    arch = rng.choice(4, size=n, p=np.asarray(cfg.archetype_mix))
    features = archetype_means(cfg)[arch] + rng.normal(0.0, cfg.noise_scale, size=(n, d))

    exp_rate = np.where(arch == Archetype.PROMPTED_ENGAGED,
                        cfg.prompted_exposure_rate, cfg.exposure_rate)
    exposed = rng.random(n) < exp_rate
    segment = derive_behavior_labels(arch, exposed)
    intent = np.where(arch == Archetype.PROMPTED_ENGAGED,
                      int(LatentIntent.PROMPTED), int(LatentIntent.ORGANIC))

    churned = rng.random(n) < cfg.churn_fraction
    churn = np.where(churned & (segment != SegmentLabel.INACTIVE),
                     int(ChurnStatus.CHURNED), int(ChurnStatus.NEVER))

    # customers observed as inactive (including unexposed prompted ones) get a stale history
    profile = np.where(segment == SegmentLabel.INACTIVE, int(Archetype.INACTIVE), arch)
    counts = rng.poisson(_TXN_RATE[profile])
    owner = np.repeat(np.arange(n), counts)
    a = profile[owner]
    u = rng.random(owner.size) ** (1.0 / _TXN_RECENT_SKEW[a])
    day = np.floor(u * _TXN_LAST_DAY_FRAC[a] * H).astype(np.int64)
    np.minimum(day, H, out=day)
    amount = np.round(rng.gamma(2.0, _TXN_AMOUNT[a] / 2.0), 2)
    order = np.lexsort((day, owner))

    ids = np.arange(1, n + 1, dtype=np.int64)
    return Dataset(ids, features, exposed, segment, intent, churn,
                   txn_customer=ids[owner[order]], txn_day=day[order],
                   txn_amount=amount[order], epoch_day=H, feature_dim=d)


def derive_stage2_initial_labels(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(ids, labels) with Engaged -> 1, Unengaged -> 0, Inactive excluded."""
    keep = ds.segment != SegmentLabel.INACTIVE
    labels = (ds.segment[keep] == SegmentLabel.ENGAGED).astype(np.int64)
    return ds.ids[keep].copy(), labels


def read_gen_config(path) -> GenConfig:
    """Read a flat ``key = value`` file whose keys are :class:`GenConfig` field names."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    return gen_config_from_strings(values)


def gen_config_from_strings(values: dict[str, str]) -> GenConfig:
    known = set(GenConfig.field_names())
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown generator keys: {', '.join(unknown)}")
    kwargs = {}
    for f in fields(GenConfig):
        if f.name not in values:
            continue
        raw = values[f.name]
        try:
            if f.name == "archetype_mix":
                kwargs[f.name] = tuple(float(x) for x in raw.split(","))
            elif f.type in ("int", int):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        except ValueError:
            raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    cfg = GenConfig(**kwargs)
    cfg.validate()
    return cfg


def intent_truth(ds: Dataset, ids: Sequence[int] | None = None) -> np.ndarray:
    """1 where latent intent is prompted, 0 where organic; requires known intent."""
    li = ds.latent_intent if ids is None else ds.latent_intent[ds.positions(ids)]
    if np.any(li < 0):
        raise ValueError("latent intent unknown for some customers")
    return (li == LatentIntent.PROMPTED).astype(np.int64)
