"""Pure numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` exactly; the comparisons are evaluated in the same
order with the same float64 arithmetic, so both backends agree bit for bit on
``svt_scan`` and ``mc_match_count``.
"""
import math

import numpy as np

_LOG_HALF = math.log(0.5)


def svt_scan(margins, qnoise, rho, cutoff, redraw):
    """Scan one query stream against a noisy threshold.

    ``margins[i]`` is ``q_i - T_i``; query ``i`` is above when
    ``margins[i] + qnoise[i] >= rho[j]``, where ``j`` counts positives so far
    if ``redraw`` is set and stays 0 otherwise.  ``cutoff <= 0`` disables the
    abort.  Returns ``(codes, n_answered)`` with ``codes`` int8 of length
    ``n_answered`` (1 above, 0 below).
    """
    margins = np.asarray(margins, dtype=np.float64)
    qnoise = np.asarray(qnoise, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    n = margins.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int8), 0
    noisy = margins + qnoise
    if not redraw:
        above = noisy >= rho[0]
        if cutoff > 0:
            hits = np.flatnonzero(above)
            if hits.shape[0] >= cutoff:
                n_ans = int(hits[cutoff - 1]) + 1
                return above[:n_ans].astype(np.int8), n_ans
        return above.astype(np.int8), n

    # threshold changes after every positive: walk the stream
    codes = np.zeros(n, dtype=np.int8)
    j = 0
    k = rho.shape[0]
    count = 0
    thr = rho[0]
    for i in range(n):
        if noisy[i] >= thr:
            codes[i] = 1
            count += 1
            if j + 1 < k:
                j += 1
                thr = rho[j]
            if 0 < cutoff <= count:
                return codes[: i + 1], i + 1
    return codes, n


def mc_match_count(noisy, rho, rho_index, codes, numeric_ok):
    """Count rows of ``noisy`` (n x L) whose outcomes match ``codes``.

    Column ``j`` is compared with ``rho[:, rho_index[j]]``.  Codes: 0 below,
    1 above, 2 above and ``numeric_ok[:, j]`` nonzero.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    if noisy.shape[1] == 0:
        return int(noisy.shape[0])
    thr = np.asarray(rho, dtype=np.float64)[:, np.asarray(rho_index, dtype=np.int64)]
    above = noisy >= thr
    codes = np.asarray(codes)
    want_above = codes >= 1
    ok = above == want_above[None, :]
    numeric_cols = codes == 2
    if numeric_cols.any():
        ok[:, numeric_cols] &= np.asarray(numeric_ok)[:, numeric_cols].astype(bool)
    return int(np.count_nonzero(ok.all(axis=1)))


def _logcdf(x, b):
    return np.where(x <= 0, _LOG_HALF + np.minimum(x, 0.0) / b,
                    np.log1p(-0.5 * np.exp(-np.maximum(x, 0.0) / b)))


def log_integrand(z, below, above, rho_scale, nu_scale):
    """``log pdf_rho(z) + sum log F(z - d_below) + sum log S(z - d_above)``.

    ``F``/``S`` are the Laplace(``nu_scale``) CDF and survival function.
    """
    z = np.asarray(z, dtype=np.float64)
    out = -np.abs(z) / rho_scale - math.log(2.0 * rho_scale)
    below = np.asarray(below, dtype=np.float64)
    above = np.asarray(above, dtype=np.float64)
    if below.shape[0]:
        out = out + _logcdf(z[:, None] - below[None, :], nu_scale).sum(axis=1)
    if above.shape[0]:
        out = out + _logcdf(above[None, :] - z[:, None], nu_scale).sum(axis=1)
    return out
