# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numeric kernels.

Mirror of geoseq._pykernels, function for function; keep the two in
lockstep (the backend-parity tests compare them on random inputs).
"""

from libc.math cimport (asin, atan, atan2, cos, exp, fabs, fmod, log,
                        sin, sqrt, tan, M_PI)

import numpy as np
cimport numpy as cnp

cnp.import_array()

GEOHASH_ALPHABET = "0123456789bcdefghjkmnpqrstuvwxyz"

cdef const char* _ALPHABET = "0123456789bcdefghjkmnpqrstuvwxyz"
cdef int _CHAR_VALUE[128]
for _i in range(128):
    _CHAR_VALUE[_i] = -1
for _i, _c in enumerate(GEOHASH_ALPHABET):
    _CHAR_VALUE[ord(_c)] = _i

cdef double _A = 6378137.0
cdef double _F = 1.0 / 298.257223563
cdef double _B = _A * (1.0 - _F)
cdef double _R_SPHERE = (2.0 * _A + _B) / 3.0
cdef double _VINCENTY_TOL = 1e-12
cdef int _VINCENTY_MAX_ITER = 200
cdef double _DEG = M_PI / 180.0

N_SYMBOLS = 32
START_SYMBOL = 32
cdef int _NSYM = 32
cdef int START_SYMBOL_C = 32


# --------------------------------------------------------------------------
# geohash

def geohash_encode(double lat, double lon, int length):
    cdef double lat_lo = -90.0, lat_hi = 90.0
    cdef double lon_lo = -180.0, lon_hi = 180.0
    cdef double mid
    cdef int bits, i, j
    cdef bint even = True
    cdef char out[12]
    for i in range(length):
        bits = 0
        for j in range(5):
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if lon >= mid:
                    bits = (bits << 1) | 1
                    lon_lo = mid
                else:
                    bits = bits << 1
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if lat >= mid:
                    bits = (bits << 1) | 1
                    lat_lo = mid
                else:
                    bits = bits << 1
                    lat_hi = mid
            even = not even
        out[i] = _ALPHABET[bits]
    return out[:length].decode("ascii")


def geohash_decode(str text):
    cdef double lat_lo = -90.0, lat_hi = 90.0
    cdef double lon_lo = -180.0, lon_hi = 180.0
    cdef double mid
    cdef int value, shift, bit
    cdef bint even = True
    for c in text:
        value = _CHAR_VALUE[ord(c)]
        for shift in range(4, -1, -1):
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

cdef inline double _wrap360(double deg) nogil:
    if deg < 0.0:
        deg += 360.0
    if deg >= 360.0:
        deg -= 360.0
    return deg


def vincenty_inverse(double lat1, double lon1, double lat2, double lon2):
    cdef double phi1, phi2, big_l, u1, u2
    cdef double sin_u1, cos_u1, sin_u2, cos_u2
    cdef double lam, lam_prev, sin_lam, cos_lam
    cdef double sin_sigma = 0.0, cos_sigma = 0.0, sigma = 0.0
    cdef double sin_alpha, cos_sq_alpha = 0.0, cos_2sm = 0.0, c
    cdef double u_sq, big_a, big_b, delta_sigma, distance, azimuth1, azimuth2
    cdef int it
    cdef bint converged = False

    if lat1 == lat2 and lon1 == lon2:
        return 0.0, 0.0, 0.0, 1

    phi1 = lat1 * _DEG
    phi2 = lat2 * _DEG
    big_l = (lon2 - lon1) * _DEG

    u1 = atan((1.0 - _F) * tan(phi1))
    u2 = atan((1.0 - _F) * tan(phi2))
    sin_u1 = sin(u1); cos_u1 = cos(u1)
    sin_u2 = sin(u2); cos_u2 = cos(u2)

    lam = big_l
    for it in range(_VINCENTY_MAX_ITER):
        sin_lam = sin(lam); cos_lam = cos(lam)
        sin_sigma = sqrt((cos_u2 * sin_lam) ** 2
                         + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam) ** 2)
        if sin_sigma == 0.0:
            return 0.0, 0.0, 0.0, 1
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lam
        sigma = atan2(sin_sigma, cos_sigma)
        sin_alpha = cos_u1 * cos_u2 * sin_lam / sin_sigma
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
        if cos_sq_alpha == 0.0:
            cos_2sm = 0.0
        else:
            cos_2sm = cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        c = _F / 16.0 * cos_sq_alpha * (4.0 + _F * (4.0 - 3.0 * cos_sq_alpha))
        lam_prev = lam
        lam = big_l + (1.0 - c) * _F * sin_alpha * (
            sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)))
        if fabs(lam - lam_prev) < _VINCENTY_TOL:
            converged = True
            break

    if not converged:
        return _sphere_inverse(phi1, lon1 * _DEG, phi2, lon2 * _DEG)

    u_sq = cos_sq_alpha * (_A * _A - _B * _B) / (_B * _B)
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))
    delta_sigma = big_b * sin_sigma * (
        cos_2sm + big_b / 4.0 * (
            cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
            - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma)
            * (-3.0 + 4.0 * cos_2sm * cos_2sm)))
    distance = _B * big_a * (sigma - delta_sigma)

    sin_lam = sin(lam); cos_lam = cos(lam)
    azimuth1 = _wrap360(atan2(cos_u2 * sin_lam,
                              cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam) / _DEG)
    azimuth2 = _wrap360(atan2(cos_u1 * sin_lam,
                              -sin_u1 * cos_u2 + cos_u1 * sin_u2 * cos_lam) / _DEG)
    return distance, azimuth1, azimuth2, 1


cdef inline double _sphere_bearing(double phi1, double phi2, double dlam) nogil:
    return _wrap360(atan2(sin(dlam) * cos(phi2),
                          cos(phi1) * sin(phi2) - sin(phi1) * cos(phi2) * cos(dlam)) / _DEG)


cdef _sphere_inverse(double phi1, double lam1, double phi2, double lam2):
    cdef double dlam = lam2 - lam1
    cdef double dphi = phi2 - phi1
    cdef double h, root, distance, azimuth1, azimuth2
    h = sin(dphi / 2.0) ** 2 + cos(phi1) * cos(phi2) * sin(dlam / 2.0) ** 2
    root = sqrt(h)
    if root > 1.0:
        root = 1.0
    distance = 2.0 * _R_SPHERE * asin(root)
    azimuth1 = _sphere_bearing(phi1, phi2, dlam)
    azimuth2 = _wrap360(_sphere_bearing(phi2, phi1, -dlam) + 180.0)
    return distance, azimuth1, azimuth2, 0


def vincenty_forward(double lat1, double lon1, double azimuth_deg, double distance):
    cdef double phi1, alpha1, u1, sin_u1, cos_u1, sin_a1, cos_a1
    cdef double sigma1, sin_alpha, cos_sq_alpha, u_sq, big_a, big_b
    cdef double sigma, sigma_prev, cos_2sm, sin_sigma, cos_sigma, delta_sigma
    cdef double phi2, lam, c, big_l
    cdef int it

    if distance == 0.0:
        return lat1, lon1

    phi1 = lat1 * _DEG
    alpha1 = azimuth_deg * _DEG
    u1 = atan((1.0 - _F) * tan(phi1))
    sin_u1 = sin(u1); cos_u1 = cos(u1)
    sin_a1 = sin(alpha1); cos_a1 = cos(alpha1)

    sigma1 = atan2(tan(u1), cos_a1)
    sin_alpha = cos_u1 * sin_a1
    cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
    u_sq = cos_sq_alpha * (_A * _A - _B * _B) / (_B * _B)
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))

    sigma = distance / (_B * big_a)
    cos_2sm = cos(2.0 * sigma1 + sigma)
    for it in range(_VINCENTY_MAX_ITER):
        cos_2sm = cos(2.0 * sigma1 + sigma)
        sin_sigma = sin(sigma); cos_sigma = cos(sigma)
        delta_sigma = big_b * sin_sigma * (
            cos_2sm + big_b / 4.0 * (
                cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                * (-3.0 + 4.0 * cos_2sm * cos_2sm)))
        sigma_prev = sigma
        sigma = distance / (_B * big_a) + delta_sigma
        if fabs(sigma - sigma_prev) < _VINCENTY_TOL:
            break

    sin_sigma = sin(sigma); cos_sigma = cos(sigma)
    phi2 = atan2(
        sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_a1,
        (1.0 - _F) * sqrt(sin_alpha * sin_alpha
                          + (sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_a1) ** 2))
    lam = atan2(sin_sigma * sin_a1,
                cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_a1)
    c = _F / 16.0 * cos_sq_alpha * (4.0 + _F * (4.0 - 3.0 * cos_sq_alpha))
    big_l = lam - (1.0 - c) * _F * sin_alpha * (
        sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)))
    return phi2 / _DEG, lon1 + big_l / _DEG


# --------------------------------------------------------------------------
# policy kernels

cdef inline void _state_probs(double[:, :, ::1] prev_table,
                              double[:, :, ::1] feat_table,
                              int[::1] feats, Py_ssize_t f_lo, Py_ssize_t f_hi,
                              int pos, int prev, double inv_temp,
                              double* probs) nogil:
    cdef Py_ssize_t k, f
    cdef double m, total
    for k in range(_NSYM):
        probs[k] = prev_table[pos, prev, k]
    for f in range(f_lo, f_hi):
        for k in range(_NSYM):
            probs[k] += feat_table[feats[f], pos, k]
    if inv_temp != 1.0:
        for k in range(_NSYM):
            probs[k] *= inv_temp
    m = probs[0]
    for k in range(1, _NSYM):
        if probs[k] > m:
            m = probs[k]
    total = 0.0
    for k in range(_NSYM):
        probs[k] = exp(probs[k] - m)
        total += probs[k]
    for k in range(_NSYM):
        probs[k] /= total


cdef inline double _safe_log(double p) nogil:
    return log(p) if p > 0.0 else -745.0


def next_probs(double[:, :, ::1] prev_table, double[:, :, ::1] feat_table,
               int[::1] feats, int pos, int prev, double inv_temp):
    cdef double buf[32]
    out = np.empty(_NSYM, dtype=np.float64)
    cdef double[::1] view = out
    _state_probs(prev_table, feat_table, feats, 0, feats.shape[0],
                 pos, prev, inv_temp, buf)
    cdef Py_ssize_t k
    for k in range(_NSYM):
        view[k] = buf[k]
    return out


def sample_tokens(double[:, :, ::1] prev_table, double[:, :, ::1] feat_table,
                  int[::1] feats, double[:, ::1] uniforms, double inv_temp):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t length = uniforms.shape[1]
    tokens_arr = np.empty((n, length), dtype=np.int32)
    logprobs_arr = np.empty((n, length), dtype=np.float64)
    cdef int[:, ::1] tokens = tokens_arr
    cdef double[:, ::1] logprobs = logprobs_arr
    cdef double probs[32]
    cdef double u, acc
    cdef Py_ssize_t i, t, k
    cdef int prev, pick, last_positive
    with nogil:
        for i in range(n):
            prev = START_SYMBOL_C
            for t in range(length):
                _state_probs(prev_table, feat_table, feats, 0, feats.shape[0],
                             <int>t, prev, inv_temp, probs)
                u = uniforms[i, t]
                acc = 0.0
                pick = -1
                last_positive = 0
                for k in range(_NSYM):
                    if probs[k] > 0.0:
                        last_positive = <int>k
                        acc += probs[k]
                        if u < acc:
                            pick = <int>k
                            break
                if pick < 0:
                    pick = last_positive
                tokens[i, t] = pick
                logprobs[i, t] = log(probs[pick])
                prev = pick
    return tokens_arr, logprobs_arr


def mle_sgd_epoch(double[:, :, ::1] prev_table, double[:, :, ::1] feat_table,
                  int[::1] feat_idx, int[::1] feat_off,
                  int[:, ::1] targets, long[::1] order, double lr):
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t length = targets.shape[1]
    cdef double probs[32]
    cdef double total = 0.0
    cdef double step_y
    cdef Py_ssize_t i, t, k, f, f_lo, f_hi
    cdef long idx
    cdef int prev, y
    with nogil:
        for i in range(n):
            idx = order[i]
            f_lo = feat_off[idx]
            f_hi = feat_off[idx + 1]
            prev = START_SYMBOL_C
            for t in range(length):
                _state_probs(prev_table, feat_table, feat_idx, f_lo, f_hi,
                             <int>t, prev, 1.0, probs)
                y = targets[idx, t]
                total += _safe_log(probs[y])
                for k in range(_NSYM):
                    probs[k] *= -lr
                probs[y] += lr
                for k in range(_NSYM):
                    prev_table[t, prev, k] += probs[k]
                for f in range(f_lo, f_hi):
                    for k in range(_NSYM):
                        feat_table[feat_idx[f], t, k] += probs[k]
                prev = y
    return total / n


def mle_batch_grad(double[:, :, ::1] prev_table, double[:, :, ::1] feat_table,
                   int[::1] feat_idx, int[::1] feat_off, int[:, ::1] targets,
                   double[:, :, ::1] gprev, double[:, :, ::1] gfeat):
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t length = targets.shape[1]
    cdef double probs[32]
    cdef double total = 0.0
    cdef Py_ssize_t i, t, k, f, f_lo, f_hi
    cdef int prev, y
    with nogil:
        for i in range(n):
            f_lo = feat_off[i]
            f_hi = feat_off[i + 1]
            prev = START_SYMBOL_C
            for t in range(length):
                _state_probs(prev_table, feat_table, feat_idx, f_lo, f_hi,
                             <int>t, prev, 1.0, probs)
                y = targets[i, t]
                total += _safe_log(probs[y])
                for k in range(_NSYM):
                    probs[k] = -probs[k]
                probs[y] += 1.0
                for k in range(_NSYM):
                    gprev[t, prev, k] += probs[k]
                for f in range(f_lo, f_hi):
                    for k in range(_NSYM):
                        gfeat[feat_idx[f], t, k] += probs[k]
                prev = y
    return total


def grpo_batch_grad(double[:, :, ::1] prev_table, double[:, :, ::1] feat_table,
                    double[:, :, ::1] old_prev, double[:, :, ::1] old_feat,
                    int[::1] gfeat_idx, int[::1] gfeat_off, int[::1] group_of,
                    int[:, ::1] tokens, double[:, ::1] old_logprobs,
                    double[::1] advantages, double clip_eps, double kl_coeff,
                    double inv_temp,
                    double[:, :, ::1] gprev, double[:, :, ::1] gfeat):
    cdef Py_ssize_t n = tokens.shape[0]
    cdef Py_ssize_t length = tokens.shape[1]
    cdef double inv_ntok = 1.0 / (n * length)
    cdef double probs[32]
    cdef double old_probs[32]
    cdef double gvec[32]
    cdef double diff[32]
    cdef double total = 0.0
    cdef double adv, ratio, clipped_ratio, unclipped, clipped, coeff, kl, q
    cdef Py_ssize_t i, t, k, f, f_lo, f_hi
    cdef int prev, y, g
    with nogil:
        for i in range(n):
            g = group_of[i]
            f_lo = gfeat_off[g]
            f_hi = gfeat_off[g + 1]
            adv = advantages[i]
            prev = START_SYMBOL_C
            for t in range(length):
                _state_probs(prev_table, feat_table, gfeat_idx, f_lo, f_hi,
                             <int>t, prev, inv_temp, probs)
                y = tokens[i, t]
                ratio = probs[y] * exp(-old_logprobs[i, t])
                clipped_ratio = ratio
                if clipped_ratio < 1.0 - clip_eps:
                    clipped_ratio = 1.0 - clip_eps
                elif clipped_ratio > 1.0 + clip_eps:
                    clipped_ratio = 1.0 + clip_eps
                unclipped = ratio * adv
                clipped = clipped_ratio * adv
                if unclipped <= clipped:
                    total += unclipped
                    coeff = adv * ratio * inv_ntok * inv_temp
                    for k in range(_NSYM):
                        gvec[k] = probs[k] * (-coeff)
                    gvec[y] += coeff
                else:
                    total += clipped
                    for k in range(_NSYM):
                        gvec[k] = 0.0
                if kl_coeff != 0.0:
                    _state_probs(old_prev, old_feat, gfeat_idx, f_lo, f_hi,
                                 <int>t, prev, inv_temp, old_probs)
                    kl = 0.0
                    for k in range(_NSYM):
                        if probs[k] > 0.0:
                            q = old_probs[k] if old_probs[k] > 0.0 else 1e-300
                            diff[k] = log(probs[k]) - log(q)
                            kl += probs[k] * diff[k]
                        else:
                            diff[k] = 0.0
                    total -= kl_coeff * kl
                    for k in range(_NSYM):
                        if probs[k] > 0.0:
                            gvec[k] -= (kl_coeff * inv_ntok * inv_temp) * probs[k] * (diff[k] - kl)
                for k in range(_NSYM):
                    gprev[t, prev, k] += gvec[k]
                for f in range(f_lo, f_hi):
                    for k in range(_NSYM):
                        gfeat[gfeat_idx[f], t, k] += gvec[k]
                prev = y
    return total * inv_ntok
