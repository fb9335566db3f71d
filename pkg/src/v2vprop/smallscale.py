"""Stochastic short-range power variation driven by local scene geometry.

The deterministic large-scale power is perturbed by a zero-mean normal draw
whose standard deviation grows with how cluttered the link's surroundings
are: more vehicles and more built-up area inside the communication ellipse
mean a wider spread. Square roots of the occupancy ratios give low-density
scenes comparatively more influence than the same increment added to an
already dense scene.

Draws are reproducible: every (run seed, timestep, transmitter, receiver)
tuple maps to its own independent generator, so results do not depend on
evaluation order or worker count.
"""

import hashlib
import logging
import math

import numpy as np

from .linkclass import LinkRecord, LinkType
from .scenario import ConfigError, RadioConfig

log = logging.getLogger(__name__)


def sigma_bounds(link_type: LinkType, cfg: RadioConfig) -> tuple:
    """Return the (sigma_min, sigma_max) dB pair for a link type.

    NLOSb links use a smaller floor when reflection/diffraction rays are
    enabled, since the rays already explain part of the variability.
    """
    if link_type is LinkType.LOS:
        return cfg.sigma_los_min, cfg.sigma_los_max
    if link_type is LinkType.NLOSV:
        return cfg.sigma_nlosv_min, cfg.sigma_nlosv_max
    if link_type is LinkType.NLOSB:
        lo = cfg.sigma_nlosb_min_rays if cfg.nlosb_rays else cfg.sigma_nlosb_min_no_rays
        return lo, cfg.sigma_nlosb_max
    raise ValueError(f"unknown link type {link_type!r}")


def sigma_for(link: LinkRecord, cfg: RadioConfig) -> float:
    """Standard deviation (dB) of the small-scale variation for one link.

    sigma = sigma_min + (sigma_max - sigma_min)/2 * (sqrt(NV/NVmax) + sqrt(AS/ASmax))

    Ratios are clamped to [0, 1]; scenes denser than the configured maxima
    are legal and simply saturate (with a warning).
    """
    nv_max = cfg.nv_max
    as_max = cfg.as_max
    if nv_max is None or as_max is None:
        raise ConfigError("nv_max and as_max must be resolved before sampling")
    if nv_max <= 0 or as_max <= 0:
        raise ConfigError(f"density maxima must be positive, got nv_max={nv_max} as_max={as_max}")

    r_nv = link.nv / nv_max
    r_as = link.as_frac / as_max
    if r_nv > 1.0 or r_as > 1.0:
        log.warning("link %s-%s density ratios (%.3f, %.3f) exceed references, clamping",
                    link.tx_id, link.rx_id, r_nv, r_as)
    r_nv = min(max(r_nv, 0.0), 1.0)
    r_as = min(max(r_as, 0.0), 1.0)

    lo, hi = sigma_bounds(link.link_type, cfg)
    return lo + (hi - lo) / 2.0 * (math.sqrt(r_nv) + math.sqrt(r_as))


def link_rng(seed: int, time: float, tx_id: str, rx_id: str) -> np.random.Generator:
    """Independent generator for one link at one timestep.

    The tuple is hashed so that nearby seeds or ids cannot produce
    correlated streams; time is quantized to milliseconds to match the
    trace file's resolution.
    """
    key = f"{int(seed)}|{round(time * 1000)}|{tx_id}|{rx_id}".encode()
    digest = hashlib.blake2b(key, digest_size=16).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


def sample_power(large_scale_dbm: float, sigma: float, rng: np.random.Generator) -> float:
    """Add one N(0, sigma) draw to the large-scale power."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return large_scale_dbm
    return large_scale_dbm + rng.normal(0.0, sigma)
