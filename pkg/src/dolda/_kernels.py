"""Numba token-resampling kernels.

Two interchangeable sweeps over a block of documents: the production
kernel keeps the classifier contribution to each topic's weight in a
per-document cache updated in O(K) per token, the reference kernel
recomputes it from scratch in O(K L) per token.  Both consume one
pre-generated uniform per token, so draws are identical no matter how
documents are split across worker threads.

Array layout conventions (chosen for contiguous inner loops):
  phi_t     (V, K)  transposed topic-word probabilities
  eta_lt    (L, K)  topic-block coefficient rows per class
  eta_cross (K, K)  eta_lt^T eta_lt, symmetric
  base      (D, L)  intercept plus covariate part of each linear score
  doc_topic (D, K)  int64 counts, updated in place
  tw_delta  (K, V)  int64 per-worker topic-word count deltas

The per-candidate exp() in the weight loop is the hot spot, so both
sweeps share a division-free exponential: round-to-nearest power-of-two
reduction via the 1.5*2^52 trick, a degree-13 Taylor polynomial on the
remainder |r| <= ln(2)/2, and the 2^m factor rebuilt by shifting the
recovered integer into the exponent field through a scalar bitcast.
Max error is 1 ulp on [-709, 0], exact at 0, hard zero below -709;
libm exp costs about twice as much per element and cannot vectorize.
Both kernels compile with FMA contraction licensed (fastmath
"contract"), which fuses multiply-add pairs without reassociating
sums, so the shared loops stay bitwise identical between them.
"""

from __future__ import annotations

import numpy as np
from numba import njit, types
from numba.extending import intrinsic

_LOG2E = 1.4426950408889634074
_LN2_HI = 6.93145751953125e-1
_LN2_LO = 1.42860682030941723212e-6
# 1.5 * 2^52: adding it rounds |x| < 2^51 to the nearest integer in the
# mantissa; its bit pattern anchors the integer recovered by subtraction.
_MAGIC = 6755399441055744.0
_TBASE = np.int64(np.float64(_MAGIC).view(np.int64))
_C2 = 1.0 / 2.0
_C3 = 1.0 / 6.0
_C4 = 1.0 / 24.0
_C5 = 1.0 / 120.0
_C6 = 1.0 / 720.0
_C7 = 1.0 / 5040.0
_C8 = 1.0 / 40320.0
_C9 = 1.0 / 362880.0
_C10 = 1.0 / 3628800.0
_C11 = 1.0 / 39916800.0
_C12 = 1.0 / 479001600.0
_C13 = 1.0 / 6227020800.0


@intrinsic
def _f64_bits(typingctx, x):
    """Reinterpret a float64 scalar as int64 (no conversion)."""
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.int64))

    return sig, codegen


@intrinsic
def _bits_f64(typingctx, x):
    """Reinterpret an int64 scalar as float64 (no conversion)."""
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.float64))

    return sig, codegen


@njit(cache=True, nogil=True, inline="always", fastmath={"contract"})
def _topic_weights(g, gmax, phi_t, v, cnt_alpha, w):
    """w[k] = phi_t[v, k] * cnt_alpha[k] * exp(g[k] - gmax); returns sum(w).

    The total is accumulated in eight lanes to break the serial add
    chain; the lane association is part of the draw contract shared by
    both kernels, so it must not change independently here.
    """
    K = g.shape[0]
    for k in range(K):
        xi = g[k] - gmax
        xi = max(xi, -709.0)
        t = _LOG2E * xi + _MAGIC
        m = t - _MAGIC
        r = (xi - m * _LN2_HI) - m * _LN2_LO
        p = _C13
        p = _C12 + r * p
        p = _C11 + r * p
        p = _C10 + r * p
        p = _C9 + r * p
        p = _C8 + r * p
        p = _C7 + r * p
        p = _C6 + r * p
        p = _C5 + r * p
        p = _C4 + r * p
        p = _C3 + r * p
        p = _C2 + r * p
        poly = 1.0 + r * (1.0 + r * p)
        # 2^m by exponent-field shift; m = -1023 gives the +0.0 pattern,
        # the right hard zero for arguments clamped at -709
        two_m = _bits_f64((_f64_bits(t) - _TBASE + np.int64(1023)) << 52)
        w[k] = phi_t[v, k] * cnt_alpha[k] * (poly * two_m)
    t0 = 0.0
    t1 = 0.0
    t2 = 0.0
    t3 = 0.0
    t4 = 0.0
    t5 = 0.0
    t6 = 0.0
    t7 = 0.0
    k = 0
    while k + 8 <= K:
        t0 += w[k]
        t1 += w[k + 1]
        t2 += w[k + 2]
        t3 += w[k + 3]
        t4 += w[k + 4]
        t5 += w[k + 5]
        t6 += w[k + 6]
        t7 += w[k + 7]
        k += 8
    while k < K:
        t0 += w[k]
        k += 1
    return ((t0 + t1) + (t2 + t3)) + ((t4 + t5) + (t6 + t7))


@njit(cache=True, nogil=True, fastmath={"contract"})
def sweep_docs_cached(
    tokens, offsets, d_start, d_stop, z, doc_topic, tw_delta,
    phi_t, alpha, eta_lt, base, a, eta_cross, uniforms,
):
    """Resample z for documents [d_start, d_stop) with the O(K) cache.

    Returns -1 on success, or the index of the first document whose
    weights degenerated to zero (caller turns that into an error).
    """
    K = phi_t.shape[1]
    L = eta_lt.shape[0]
    g = np.empty(K, dtype=np.float64)
    w = np.empty(K, dtype=np.float64)
    cnt_alpha = np.empty(K, dtype=np.float64)
    for d in range(d_start, d_stop):
        lo = offsets[d]
        nd = offsets[d + 1] - lo
        if nd == 0:
            continue
        inv = 1.0 / nd
        inv2 = inv * inv

        # g with every token included: per-class residual against the
        # current scores, projected onto each topic's coefficients,
        # minus the half quadratic correction.
        for k in range(K):
            g[k] = 0.0
            cnt_alpha[k] = doc_topic[d, k] + alpha
        for l in range(L):
            pred = base[d, l]
            for k in range(K):
                pred += doc_topic[d, k] * eta_lt[l, k] * inv
            resid = (a[d, l] - pred) * inv
            for k in range(K):
                g[k] += eta_lt[l, k] * resid
        for k in range(K):
            g[k] -= 0.5 * eta_cross[k, k] * inv2

        # each token pulls itself out of the cache; re-inserting the
        # previous draw is folded into the same pass, so only the final
        # draw of the document is never written back (g is rebuilt above)
        z_prev = -1
        for i in range(nd):
            idx = lo + i
            v = tokens[idx]
            z_old = z[idx]
            doc_topic[d, z_old] -= 1
            cnt_alpha[z_old] -= 1.0

            if z_prev < 0:
                for k in range(K):
                    g[k] += eta_cross[z_old, k] * inv2
            else:
                for k in range(K):
                    g[k] += (eta_cross[z_old, k] - eta_cross[z_prev, k]) * inv2
            g_max = g[0]
            for k in range(1, K):
                g_max = max(g_max, g[k])

            total = _topic_weights(g, g_max, phi_t, v, cnt_alpha, w)
            if not total > 0.0:
                return d

            u = uniforms[idx] * total
            acc = 0.0
            z_new = -1
            for k in range(K):
                acc += w[k]
                if u < acc:
                    z_new = k
                    break
            if z_new < 0:
                # u * total can exceed the serial prefix sum by an ulp;
                # fall back to the last topic with any mass
                z_new = K - 1
                while w[z_new] == 0.0:
                    z_new -= 1

            doc_topic[d, z_new] += 1
            cnt_alpha[z_new] += 1.0
            if z_new != z_old:
                tw_delta[z_old, v] -= 1
                tw_delta[z_new, v] += 1
                z[idx] = z_new
            z_prev = z_new
    return -1


@njit(cache=True, nogil=True, fastmath={"contract"})
def sweep_docs_naive(
    tokens, offsets, d_start, d_stop, z, doc_topic, tw_delta,
    phi_t, alpha, eta_lt, base, a, uniforms,
):
    """Reference sweep: same draws as the cached kernel, but the classifier
    weight of every candidate topic is rebuilt from the residuals at each
    token, costing O(K L) instead of O(K)."""
    K = phi_t.shape[1]
    L = eta_lt.shape[0]
    g = np.empty(K, dtype=np.float64)
    resid = np.empty(L, dtype=np.float64)
    w = np.empty(K, dtype=np.float64)
    cnt_alpha = np.empty(K, dtype=np.float64)
    for d in range(d_start, d_stop):
        lo = offsets[d]
        nd = offsets[d + 1] - lo
        if nd == 0:
            continue
        inv = 1.0 / nd
        inv2 = inv * inv
        for k in range(K):
            cnt_alpha[k] = doc_topic[d, k] + alpha
        for i in range(nd):
            idx = lo + i
            v = tokens[idx]
            z_old = z[idx]
            doc_topic[d, z_old] -= 1
            cnt_alpha[z_old] -= 1.0

            for l in range(L):
                pred = base[d, l]
                for k in range(K):
                    pred += doc_topic[d, k] * eta_lt[l, k] * inv
                resid[l] = (a[d, l] - pred) * inv
            g_max = -1.0e308
            for k in range(K):
                acc = 0.0
                quad = 0.0
                for l in range(L):
                    acc += eta_lt[l, k] * resid[l]
                    quad += eta_lt[l, k] * eta_lt[l, k]
                g[k] = acc - 0.5 * quad * inv2
                if g[k] > g_max:
                    g_max = g[k]

            total = _topic_weights(g, g_max, phi_t, v, cnt_alpha, w)
            if not total > 0.0:
                return d

            u = uniforms[idx] * total
            acc2 = 0.0
            z_new = -1
            for k in range(K):
                acc2 += w[k]
                if u < acc2:
                    z_new = k
                    break
            if z_new < 0:
                # u * total can exceed the serial prefix sum by an ulp;
                # fall back to the last topic with any mass
                z_new = K - 1
                while w[z_new] == 0.0:
                    z_new -= 1

            doc_topic[d, z_new] += 1
            cnt_alpha[z_new] += 1.0
            if z_new != z_old:
                tw_delta[z_old, v] -= 1
                tw_delta[z_new, v] += 1
                z[idx] = z_new
    return -1


@njit(cache=True, nogil=True)
def sample_doc_topics(token_ids, phi_t, alpha, passes, burn, uniforms):
    """Collapsed topic sweep for one held-out document against fixed phi.

    Pass 0 builds the assignment incrementally from an empty count vector;
    later passes resample every token.  Returns the mean of the per-pass
    topic proportions over the retained passes.
    """
    K = phi_t.shape[1]
    nd = token_ids.shape[0]
    counts = np.zeros(K, dtype=np.int64)
    zloc = np.zeros(nd, dtype=np.int32)
    zbar_sum = np.zeros(K, dtype=np.float64)
    cum = np.empty(K, dtype=np.float64)
    kept = 0
    for sweep in range(passes):
        for i in range(nd):
            v = token_ids[i]
            if sweep > 0:
                counts[zloc[i]] -= 1
            total = 0.0
            for k in range(K):
                total += phi_t[v, k] * (counts[k] + alpha)
                cum[k] = total
            u = uniforms[sweep * nd + i] * total
            z_new = K - 1
            for k in range(K):
                if u < cum[k]:
                    z_new = k
                    break
            zloc[i] = z_new
            counts[z_new] += 1
        if sweep >= burn:
            kept += 1
            if nd > 0:
                for k in range(K):
                    zbar_sum[k] += counts[k] / nd
    if kept == 0 or nd == 0:
        return np.zeros(K, dtype=np.float64)
    return zbar_sum / kept
