"""Dropout-tolerant secure aggregation with single random masks, plus a
no-dropout pairwise-mask baseline.

Each client hides its quantized update under one uniform field mask and
secret-shares the mask. After uploads, every surviving client sends the
sum of the shares it holds for the surviving set; the server interpolates
the aggregate mask from any T of those sums and removes it. Individual
updates and individual masks never reach the server.
"""

import hashlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DropoutUnsupported, InsufficientSurvivors, LayoutMismatch
from .field import (
    MERSENNE61,
    FieldVector,
    expand_seed,
    shamir_reconstruct,
    shamir_share,
)


@dataclass
class SAConfig:
    num_clients: int = 4
    threshold: int = 3
    scale_bits: int = 24
    clamp_bound: int = 1 << 30
    prime: int = MERSENNE61
    seed: int = 0
    timeout: float = 5.0
    # simulation-only schedule: round -> client ids that drop after sharing
    dropouts: dict = dc_field(default_factory=dict)

    def validate(self):
        if not (1 <= self.threshold <= self.num_clients):
            raise ValueError("need 1 <= T <= N")
        if self.num_clients * (2 * self.clamp_bound + 1) >= self.prime:
            raise ValueError("N*(2B+1) must stay below the field modulus")
        if self.scale_bits < 1:
            raise ValueError("scale_bits must be >= 1")


def quantize(values: np.ndarray, scale_bits: int, clamp_bound: int,
             p: int = MERSENNE61):
    """Fixed-point map into the field; negatives are stored centered as
    p - |q|. Returns (FieldVector, clamped_count)."""
    w = np.asarray(values, dtype=np.float64).reshape(-1)
    q = np.rint(w * (1 << scale_bits))
    clamped = int(np.count_nonzero((q < -clamp_bound) | (q > clamp_bound)))
    q = np.clip(q, -clamp_bound, clamp_bound).astype(np.int64)
    return FieldVector([int(v) % p for v in q], p), clamped


def dequantize(fv: FieldVector, scale_bits: int) -> np.ndarray:
    """Centered lift then division by 2^scale_bits."""
    half = fv.p // 2
    lifted = np.array(
        [v if v <= half else v - fv.p for v in fv.values], dtype=np.float64
    )
    return lifted / (1 << scale_bits)


def mask_seed(seed: int, client_id: int, round_index: int) -> bytes:
    material = b"fedgraph-mask" + seed.to_bytes(8, "little", signed=False) \
        + client_id.to_bytes(4, "little") + round_index.to_bytes(4, "little")
    return hashlib.sha256(material).digest()


def client_mask(cfg: SAConfig, client_id: int, round_index: int, dim: int) -> FieldVector:
    return expand_seed(mask_seed(cfg.seed, client_id, round_index), dim, cfg.prime)


def client_mask_shares(cfg: SAConfig, client_id: int, round_index: int, dim: int):
    """(mask, shares) for one client; shares[j] is destined for client j+1."""
    z = client_mask(cfg, client_id, round_index, dim)
    rng = np.random.default_rng(
        [0x5ec7, cfg.seed & 0xFFFFFFFF, client_id, round_index]
    )
    return z, shamir_share(z, cfg.num_clients, cfg.threshold, rng)


def masked_upload(cfg: SAConfig, weights: np.ndarray, num_samples: int,
                  mask: FieldVector):
    """Quantize num_samples * weights and add the one-time mask."""
    q, clamped = quantize(
        num_samples * np.asarray(weights, dtype=np.float64),
        cfg.scale_bits, cfg.clamp_bound, cfg.prime,
    )
    return q + mask, clamped


def aggregate_share(shares_held: dict[int, FieldVector], survivors) -> FieldVector:
    """Sum of the held shares for the surviving set (Shamir is linear, so
    this is a share of the aggregate mask)."""
    survivors = sorted(survivors)
    acc = shares_held[survivors[0]]
    for i in survivors[1:]:
        acc = acc + shares_held[i]
    return acc


def unmask_aggregate(cfg: SAConfig, uploads: dict[int, FieldVector],
                     agg_shares: dict[int, FieldVector],
                     sample_counts: dict[int, int]) -> np.ndarray:
    """Server side: subtract the reconstructed aggregate mask and rescale.

    uploads maps surviving client id -> masked vector; agg_shares maps the
    Shamir evaluation point (client index, 1-based) -> aggregated share.
    """
    if len(agg_shares) < cfg.threshold:
        raise InsufficientSurvivors(
            f"{len(agg_shares)} aggregated shares < threshold {cfg.threshold}"
        )
    points = sorted(agg_shares)[:cfg.threshold]
    agg_mask = shamir_reconstruct(
        [(x, agg_shares[x]) for x in points], cfg.threshold
    )
    total = None
    for cid in sorted(uploads):
        total = uploads[cid] if total is None else total + uploads[cid]
    unmasked = total - agg_mask
    denom = sum(sample_counts[cid] for cid in uploads)
    return dequantize(unmasked, cfg.scale_bits) / denom


def lightsecagg_round(updates, cfg: SAConfig, survivors_upload=None,
                      survivors_shares=None) -> np.ndarray:
    """One full protocol round over in-memory participants.

    updates: list of (client_id, num_samples, flat weights) with client ids
    1..N. survivors_upload (U1) upload masked vectors; survivors_shares
    (U2, subset of U1) answer the aggregate-share request. Returns the
    sample-weighted average over U1, or raises InsufficientSurvivors.
    """
    cfg.validate()
    ids = [cid for cid, _, _ in updates]
    if sorted(ids) != list(range(1, cfg.num_clients + 1)):
        raise LayoutMismatch("updates must cover client ids 1..N exactly")
    dims = {len(np.asarray(w).reshape(-1)) for _, _, w in updates}
    if len(dims) != 1:
        raise LayoutMismatch("all updates must share one dimension")
    dim = dims.pop()
    survivors_upload = sorted(survivors_upload or ids)
    survivors_shares = sorted(survivors_shares or survivors_upload)
    if not set(survivors_shares) <= set(survivors_upload):
        raise ValueError("U2 must be a subset of U1")
    if len(survivors_shares) < cfg.threshold:
        raise InsufficientSurvivors(
            f"{len(survivors_shares)} survivors < threshold {cfg.threshold}"
        )

    # R1: every client shares its mask with every other client
    held: dict[int, dict[int, FieldVector]] = {cid: {} for cid in ids}
    masks = {}
    for cid in ids:
        z, shares = client_mask_shares(cfg, cid, round_index=0, dim=dim)
        masks[cid] = z
        for x, sv in shares:
            held[x][cid] = sv

    # R2: survivors upload masked quantized updates
    uploads, counts = {}, {}
    for cid, n, w in updates:
        counts[cid] = n
        if cid in survivors_upload:
            uploads[cid], _ = masked_upload(cfg, w, n, masks[cid])

    # R3: surviving clients answer with their aggregated share
    agg_shares = {
        cid: aggregate_share(held[cid], survivors_upload)
        for cid in survivors_shares
    }
    return unmask_aggregate(cfg, uploads, agg_shares, counts)


def pairwise_seed(seed: int, i: int, j: int) -> bytes:
    lo, hi = min(i, j), max(i, j)
    material = b"fedgraph-pairwise" + seed.to_bytes(8, "little") \
        + lo.to_bytes(4, "little") + hi.to_bytes(4, "little")
    return hashlib.sha256(material).digest()


def pairwise_mask_round(updates, cfg: SAConfig, survivors=None) -> np.ndarray:
    """No-dropout baseline: trusted-setup pairwise pads that telescope to
    zero in the field sum."""
    cfg.validate()
    ids = sorted(cid for cid, _, _ in updates)
    if survivors is not None and sorted(survivors) != ids:
        raise DropoutUnsupported("the pairwise-mask baseline requires all clients")
    dim = len(np.asarray(updates[0][2]).reshape(-1))
    total = None
    counts = {}
    for cid, n, w in sorted(updates):
        counts[cid] = n
        q, _ = quantize(n * np.asarray(w, dtype=np.float64),
                        cfg.scale_bits, cfg.clamp_bound, cfg.prime)
        for other in ids:
            if other == cid:
                continue
            pad = expand_seed(pairwise_seed(cfg.seed, cid, other), dim, cfg.prime)
            q = q + pad if other > cid else q - pad
        total = q if total is None else total + q
    denom = sum(counts.values())
    return dequantize(total, cfg.scale_bits) / denom
