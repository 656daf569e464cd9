"""Pure-Python/numpy implementations of the numeric kernels.

Every function here has a compiled twin in geoseq._core with the same name,
signature, and semantics; geoseq.kernels picks one of the two at import
time. Keep the two files in lockstep: the backend-parity tests compare them
on random inputs.

Inputs are pre-validated by the calling modules (geohash strings are already
alphabet-checked, coordinates already normalized), so the kernels do no
argument checking of their own.
"""

from __future__ import annotations

import math

import numpy as np

GEOHASH_ALPHABET = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_TO_BITS = {c: i for i, c in enumerate(GEOHASH_ALPHABET)}

# WGS-84
_A = 6378137.0
_F = 1.0 / 298.257223563
_B = _A * (1.0 - _F)
# Mean radius used only by the near-antipodal spherical fallback.
_R_SPHERE = (2.0 * _A + _B) / 3.0

_VINCENTY_TOL = 1e-12  # radians; ~0.06 mm
_VINCENTY_MAX_ITER = 200

N_SYMBOLS = 32
START_SYMBOL = 32  # row index of the start-of-sequence sentinel in prev tables


# --------------------------------------------------------------------------
# geohash

def geohash_encode(lat: float, lon: float, length: int) -> str:
    """Encode by alternating lon/lat interval bisection, 5 bits per symbol."""
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    bits = 0
    even = True  # longitude first
    for _ in range(length):
        for _ in range(5):
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if lon >= mid:
                    bits = (bits << 1) | 1
                    lon_lo = mid
                else:
                    bits <<= 1
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if lat >= mid:
                    bits = (bits << 1) | 1
                    lat_lo = mid
                else:
                    bits <<= 1
                    lat_hi = mid
            even = not even
        chars.append(GEOHASH_ALPHABET[bits])
        bits = 0
    return "".join(chars)


def geohash_decode(text: str) -> tuple[float, float, float, float]:
    """Return the exact dyadic cell (lat_min, lat_max, lon_min, lon_max)."""
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in text:
        value = _CHAR_TO_BITS[c]
        for shift in (4, 3, 2, 1, 0):
            bit = (value >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if bit:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if bit:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return lat_lo, lat_hi, lon_lo, lon_hi


# --------------------------------------------------------------------------
# WGS-84 geodesics (Vincenty)

def vincenty_inverse(lat1: float, lon1: float,
                     lat2: float, lon2: float) -> tuple[float, float, float, int]:
    """Inverse problem on the ellipsoid.

    Returns (distance_m, azimuth1, azimuth2, converged): the initial bearing
    at point 1 and the forward bearing on arrival at point 2, degrees in
    [0, 360). On the rare near-antipodal inputs where the lambda iteration
    diverges, falls back to a mean-sphere great circle and reports
    converged=0.
    """
    if lat1 == lat2 and lon1 == lon2:
        return 0.0, 0.0, 0.0, 1

    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    big_l = math.radians(lon2 - lon1)

    u1 = math.atan((1.0 - _F) * math.tan(phi1))
    u2 = math.atan((1.0 - _F) * math.tan(phi2))
    sin_u1, cos_u1 = math.sin(u1), math.cos(u1)
    sin_u2, cos_u2 = math.sin(u2), math.cos(u2)

    lam = big_l
    converged = False
    sin_sigma = cos_sigma = sigma = cos_sq_alpha = cos_2sm = 0.0
    for _ in range(_VINCENTY_MAX_ITER):
        sin_lam, cos_lam = math.sin(lam), math.cos(lam)
        sin_sigma = math.sqrt((cos_u2 * sin_lam) ** 2
                              + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam) ** 2)
        if sin_sigma == 0.0:
            return 0.0, 0.0, 0.0, 1  # coincident after reduction
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lam
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cos_u1 * cos_u2 * sin_lam / sin_sigma
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
        if cos_sq_alpha == 0.0:
            cos_2sm = 0.0  # equatorial line
        else:
            cos_2sm = cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        c = _F / 16.0 * cos_sq_alpha * (4.0 + _F * (4.0 - 3.0 * cos_sq_alpha))
        lam_prev = lam
        lam = big_l + (1.0 - c) * _F * sin_alpha * (
            sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)))
        if abs(lam - lam_prev) < _VINCENTY_TOL:
            converged = True
            break

    if not converged:
        return _sphere_inverse(phi1, math.radians(lon1), phi2, math.radians(lon2))

    u_sq = cos_sq_alpha * (_A * _A - _B * _B) / (_B * _B)
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))
    delta_sigma = big_b * sin_sigma * (
        cos_2sm + big_b / 4.0 * (
            cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
            - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma)
            * (-3.0 + 4.0 * cos_2sm * cos_2sm)))
    distance = _B * big_a * (sigma - delta_sigma)

    sin_lam, cos_lam = math.sin(lam), math.cos(lam)
    azimuth1 = _wrap360(math.degrees(math.atan2(
        cos_u2 * sin_lam, cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam)))
    azimuth2 = _wrap360(math.degrees(math.atan2(
        cos_u1 * sin_lam, -sin_u1 * cos_u2 + cos_u1 * sin_u2 * cos_lam)))
    return distance, azimuth1, azimuth2, 1


def _wrap360(deg: float) -> float:
    if deg < 0.0:
        deg += 360.0
    if deg >= 360.0:
        deg -= 360.0
    return deg


def _sphere_bearing(phi1: float, phi2: float, dlam: float) -> float:
    return _wrap360(math.degrees(math.atan2(
        math.sin(dlam) * math.cos(phi2),
        math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam))))


def _sphere_inverse(phi1: float, lam1: float,
                    phi2: float, lam2: float) -> tuple[float, float, float, int]:
    dlam = lam2 - lam1
    dphi = phi2 - phi1
    h = (math.sin(dphi / 2.0) ** 2
         + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2)
    distance = 2.0 * _R_SPHERE * math.asin(min(1.0, math.sqrt(h)))
    azimuth1 = _sphere_bearing(phi1, phi2, dlam)
    azimuth2 = _wrap360(_sphere_bearing(phi2, phi1, -dlam) + 180.0)
    return distance, azimuth1, azimuth2, 0


def vincenty_forward(lat1: float, lon1: float,
                     azimuth_deg: float, distance: float) -> tuple[float, float]:
    """Direct problem: destination after `distance` meters along `azimuth_deg`."""
    if distance == 0.0:
        return lat1, lon1

    phi1 = math.radians(lat1)
    alpha1 = math.radians(azimuth_deg)
    u1 = math.atan((1.0 - _F) * math.tan(phi1))
    sin_u1, cos_u1 = math.sin(u1), math.cos(u1)
    sin_a1, cos_a1 = math.sin(alpha1), math.cos(alpha1)

    sigma1 = math.atan2(math.tan(u1), cos_a1)
    sin_alpha = cos_u1 * sin_a1
    cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
    u_sq = cos_sq_alpha * (_A * _A - _B * _B) / (_B * _B)
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))

    sigma = distance / (_B * big_a)
    cos_2sm = math.cos(2.0 * sigma1 + sigma)
    for _ in range(_VINCENTY_MAX_ITER):
        cos_2sm = math.cos(2.0 * sigma1 + sigma)
        sin_sigma, cos_sigma = math.sin(sigma), math.cos(sigma)
        delta_sigma = big_b * sin_sigma * (
            cos_2sm + big_b / 4.0 * (
                cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                * (-3.0 + 4.0 * cos_2sm * cos_2sm)))
        sigma_prev = sigma
        sigma = distance / (_B * big_a) + delta_sigma
        if abs(sigma - sigma_prev) < _VINCENTY_TOL:
            break

    sin_sigma, cos_sigma = math.sin(sigma), math.cos(sigma)
    phi2 = math.atan2(
        sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_a1,
        (1.0 - _F) * math.sqrt(sin_alpha * sin_alpha
                               + (sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_a1) ** 2))
    lam = math.atan2(sin_sigma * sin_a1,
                     cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_a1)
    c = _F / 16.0 * cos_sq_alpha * (4.0 + _F * (4.0 - 3.0 * cos_sq_alpha))
    big_l = lam - (1.0 - c) * _F * sin_alpha * (
        sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)))
    return math.degrees(phi2), lon1 + math.degrees(big_l)


# --------------------------------------------------------------------------
# policy kernels
#
# prev_table: (L, 33, 32) float64 -- position x previous-symbol x next-symbol
# feat_table: (B, L, 32) float64  -- feature bucket x position x next-symbol

def next_probs(prev_table: np.ndarray, feat_table: np.ndarray,
               feats: np.ndarray, pos: int, prev: int,
               inv_temp: float) -> np.ndarray:
    """Softmax over the 32 next-symbol logits at one decoding state."""
    logits = prev_table[pos, prev].copy()
    if feats.size:
        logits += feat_table[feats, pos].sum(axis=0)
    if inv_temp != 1.0:
        logits *= inv_temp
    logits -= logits.max()
    np.exp(logits, out=logits)
    logits /= logits.sum()
    return logits


def _safe_log(p: float) -> float:
    # log-likelihood bookkeeping only; saturates instead of raising on underflow
    return math.log(p) if p > 0.0 else -745.0


def _pick(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    last_positive = 0
    for k in range(N_SYMBOLS):
        p = probs[k]
        if p > 0.0:
            last_positive = k
            acc += p
            if u < acc:
                return k
    return last_positive  # u fell into the rounding gap at the top


def sample_tokens(prev_table: np.ndarray, feat_table: np.ndarray,
                  feats: np.ndarray, uniforms: np.ndarray,
                  inv_temp: float) -> tuple[np.ndarray, np.ndarray]:
    """Draw one token sequence per row of `uniforms` (one uniform per step).

    Returns (tokens, log_probs), both shaped like `uniforms`; log-probs are
    taken under the temperature-scaled distribution actually sampled from.
    """
    n, length = uniforms.shape
    tokens = np.empty((n, length), dtype=np.int32)
    logprobs = np.empty((n, length), dtype=np.float64)
    for i in range(n):
        prev = START_SYMBOL
        for t in range(length):
            probs = next_probs(prev_table, feat_table, feats, t, prev, inv_temp)
            k = _pick(probs, uniforms[i, t])
            tokens[i, t] = k
            logprobs[i, t] = math.log(probs[k])
            prev = k
    return tokens, logprobs


def mle_sgd_epoch(prev_table: np.ndarray, feat_table: np.ndarray,
                  feat_idx: np.ndarray, feat_off: np.ndarray,
                  targets: np.ndarray, order: np.ndarray, lr: float) -> float:
    """One per-sample SGD pass maximizing token log-likelihood, in place.

    Returns the epoch mean per-sample log-likelihood (measured as visited,
    i.e. with the weights evolving).
    """
    n, length = targets.shape
    total = 0.0
    for idx in order:
        feats = feat_idx[feat_off[idx]:feat_off[idx + 1]]
        prev = START_SYMBOL
        for t in range(length):
            probs = next_probs(prev_table, feat_table, feats, t, prev, 1.0)
            y = targets[idx, t]
            total += _safe_log(probs[y])
            step = probs * (-lr)
            step[y] += lr
            prev_table[t, prev] += step
            if feats.size:
                feat_table[feats, t] += step
            prev = y
    return total / n


def mle_batch_grad(prev_table: np.ndarray, feat_table: np.ndarray,
                   feat_idx: np.ndarray, feat_off: np.ndarray,
                   targets: np.ndarray,
                   gprev: np.ndarray, gfeat: np.ndarray) -> float:
    """Accumulate the full-batch log-likelihood gradient; return total log-lik."""
    n, length = targets.shape
    total = 0.0
    for idx in range(n):
        feats = feat_idx[feat_off[idx]:feat_off[idx + 1]]
        prev = START_SYMBOL
        for t in range(length):
            probs = next_probs(prev_table, feat_table, feats, t, prev, 1.0)
            y = targets[idx, t]
            total += _safe_log(probs[y])
            g = -probs
            g[y] += 1.0
            gprev[t, prev] += g
            if feats.size:
                gfeat[feats, t] += g
            prev = y
    return total


def grpo_batch_grad(prev_table: np.ndarray, feat_table: np.ndarray,
                    old_prev: np.ndarray, old_feat: np.ndarray,
                    gfeat_idx: np.ndarray, gfeat_off: np.ndarray,
                    group_of: np.ndarray, tokens: np.ndarray,
                    old_logprobs: np.ndarray, advantages: np.ndarray,
                    clip_eps: float, kl_coeff: float, inv_temp: float,
                    gprev: np.ndarray, gfeat: np.ndarray) -> float:
    """Clipped-surrogate objective (token mean) and its gradient.

    The surrogate per token is min(ratio*A, clip(ratio)*A) with the ratio
    taken against the recorded rollout log-probs, both sides under the
    sampling temperature (inv_temp); an optional exact KL(new||old) penalty
    is evaluated at each visited state against the snapshot tables.
    Gradients are accumulated into gprev/gfeat already scaled by 1/n_tokens
    so that the caller can apply them directly.
    """
    n, length = tokens.shape
    inv_ntok = 1.0 / (n * length)
    total = 0.0
    for i in range(n):
        g = group_of[i]
        feats = gfeat_idx[gfeat_off[g]:gfeat_off[g + 1]]
        adv = advantages[i]
        prev = START_SYMBOL
        for t in range(length):
            probs = next_probs(prev_table, feat_table, feats, t, prev, inv_temp)
            y = tokens[i, t]
            ratio = probs[y] * math.exp(-old_logprobs[i, t])
            clipped_ratio = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
            unclipped = ratio * adv
            clipped = clipped_ratio * adv
            if unclipped <= clipped:
                total += unclipped
                # d(log p_y)/dlogits = inv_temp * (onehot - p)
                coeff = adv * ratio * inv_ntok * inv_temp
                gvec = probs * (-coeff)
                gvec[y] += coeff
            else:
                total += clipped  # clip active: zero gradient
                gvec = np.zeros(N_SYMBOLS)
            if kl_coeff != 0.0:
                old_probs = next_probs(old_prev, old_feat, feats, t, prev, inv_temp)
                kl = 0.0
                diff = np.zeros(N_SYMBOLS)
                for k in range(N_SYMBOLS):
                    if probs[k] > 0.0:
                        q = old_probs[k] if old_probs[k] > 0.0 else 1e-300
                        diff[k] = math.log(probs[k]) - math.log(q)
                        kl += probs[k] * diff[k]
                total -= kl_coeff * kl
                gvec -= (kl_coeff * inv_ntok * inv_temp) * probs * (diff - kl)
            gprev[t, prev] += gvec
            if feats.size:
                gfeat[feats, t] += gvec
            prev = y
    return total * inv_ntok
