"""Inner loop of the wealth-grid dynamic program, in numba and in plain numpy.

Values are carried as ``psi = log(-gamma * u)``, so maximising expected exponential
utility means minimising ``log(p exp(psi_up) + (1 - p) exp(psi_down))``. Both
backends run the same scan + golden-section sequence so they agree to rounding.

Set ``THRESHOLD_WARRANTS_NUMBA=0`` to force the numpy path.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

NUMBA_AVAILABLE = njit is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("THRESHOLD_WARRANTS_NUMBA", "1").lower() not in (
    "0", "false", "no", "off",
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0
N_SCAN = 33
EDGE = 1e-7  # grid-index slack before an excursion counts as clamped


def golden_iterations(width: float, tol: float) -> int:
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))


# ---------------------------------------------------------------- numpy backend


def _interp_np(flat, rows, lo, dw, G, v, log_mode):
    x = np.clip((v - lo) / dw, 0.0, G - 1.0)
    k = np.minimum(x.astype(np.int64), G - 2)
    f = x - k
    a = flat[rows * G + k]
    b = flat[rows * G + k + 1]
    if log_mode:
        return a + f * (b - a)
    m = np.maximum(a, b)
    return m + np.log((1.0 - f) * np.exp(a - m) + f * np.exp(b - m))


def _objective_np(delta, w, P, Pu, Pd, growth, p, flat, ru, rd, lo, dw, G, log_mode):
    base = (w - delta * P) * growth
    a = _interp_np(flat, ru, lo, dw, G, base + delta * Pu, log_mode)
    b = _interp_np(flat, rd, lo, dw, G, base + delta * Pd, log_mode)
    m = np.maximum(a, b)
    return m + np.log(p * np.exp(a - m) + (1.0 - p) * np.exp(b - m))


def sweep_slice_numpy(w_now, P, Pu, Pd, ru, rd, psi_next, lo_next, dw_next, growth, p,
                      a, b, delta_grid, log_mode, tol):
    """Optimise every (cell, wealth) pair of one slice; cells are flattened (j, hit) states.

    Returns ``(psi, delta, clamp_events)`` with arrays of shape (cells, G_now).
    """
    G = psi_next.shape[-1]
    flat = psi_next.reshape(-1)
    C, Gn = P.shape[0], w_now.shape[0]
    W = np.broadcast_to(w_now, (C, Gn)).reshape(-1)
    rep = lambda arr: np.repeat(arr, Gn)
    P, Pu, Pd, ru, rd = rep(P), rep(Pu), rep(Pd), rep(ru), rep(rd)

    def F(delta):
        return _objective_np(delta, W, P, Pu, Pd, growth, p, flat, ru, rd, lo_next, dw_next, G, log_mode)

    if delta_grid.shape[0] > 0:
        best = np.full(W.shape, np.inf)
        dstar = np.zeros(W.shape)
        for d in delta_grid:
            val = F(np.full(W.shape, d))
            better = val < best
            best = np.where(better, val, best)
            dstar = np.where(better, d, dstar)
    elif a == b:
        dstar = np.full(W.shape, a)
        best = F(dstar)
    else:
        h = (b - a) / (N_SCAN - 1)
        best = np.full(W.shape, np.inf)
        kbest = np.zeros(W.shape, dtype=np.int64)
        for i in range(N_SCAN):
            val = F(np.full(W.shape, a + h * i))
            better = val < best
            best = np.where(better, val, best)
            kbest = np.where(better, i, kbest)
        dstar = a + h * kbest
        k0 = np.clip(kbest - 1, 0, N_SCAN - 3)
        lo = a + h * k0
        dist = 2.0 * h
        c = lo + INV_PHI2 * dist
        d = lo + INV_PHI * dist
        fc, fd = F(c), F(d)
        for _ in range(golden_iterations(dist, tol)):
            left = fc < fd
            dist = INV_PHI * dist
            lo = np.where(left, lo, c)
            # the surviving interior point moves into the c or d slot
            c_new = np.where(left, lo + INV_PHI2 * dist, d)
            d_new = np.where(left, c, lo + INV_PHI * dist)
            fp = F(np.where(left, c_new, d_new))
            fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
            c, d = c_new, d_new
        mid = lo + 0.5 * dist
        fmid = F(mid)
        take = fmid < best
        dstar = np.where(take, mid, dstar)
        best = np.where(take, fmid, best)

    base = (W - dstar * P) * growth
    span = (G - 1) + EDGE
    xu = (base + dstar * Pu - lo_next) / dw_next
    xd = (base + dstar * Pd - lo_next) / dw_next
    outside = (xu < -EDGE) | (xu > span) | (xd < -EDGE) | (xd > span)
    return best.reshape(C, Gn), dstar.reshape(C, Gn), int(outside.sum())


# ---------------------------------------------------------------- numba backend

if NUMBA_AVAILABLE:

    @njit(cache=True, error_model="numpy")
    def _interp_nb(psi_next, row, h, lo, dw, G, v, log_mode):
        x = (v - lo) / dw
        if x < 0.0:
            x = 0.0
        elif x > G - 1.0:
            x = G - 1.0
        k = int(x)
        if k > G - 2:
            k = G - 2
        f = x - k
        a = psi_next[row, h, k]
        b = psi_next[row, h, k + 1]
        if log_mode:
            return a + f * (b - a)
        m = max(a, b)
        return m + math.log((1.0 - f) * math.exp(a - m) + f * math.exp(b - m))

    @njit(cache=True, error_model="numpy")
    def _objective_nb(delta, w, P, Pu, Pd, growth, p, psi_next, j, h2, lo, dw, G, log_mode):
        base = (w - delta * P) * growth
        a = _interp_nb(psi_next, j + 1, h2, lo, dw, G, base + delta * Pu, log_mode)
        b = _interp_nb(psi_next, j, h2, lo, dw, G, base + delta * Pd, log_mode)
        m = max(a, b)
        return m + math.log(p * math.exp(a - m) + (1.0 - p) * math.exp(b - m))

    @njit(cache=True, error_model="numpy")
    def sweep_slice_numba(w_now, price_now, price_next, child_hit, reachable, psi_next,
                          lo_next, dw_next, growth, p, a, b, delta_grid, log_mode, tol,
                          psi_out, delta_out):
        J = price_now.shape[0]
        G = psi_next.shape[2]
        Gn = w_now.shape[0]
        clamps = 0
        h_scan = (b - a) / (N_SCAN - 1)
        n_iter = 0
        if a != b:
            width = 2.0 * h_scan
            if width > tol:
                n_iter = int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
        for j in range(J):
            for h in range(2):
                if not reachable[j, h]:
                    continue
                h2 = 1 if child_hit[j, h] else 0
                P = price_now[j, h]
                Pu = price_next[j + 1, h2]
                Pd = price_next[j, h2]
                for g in range(Gn):
                    w = w_now[g]
                    if delta_grid.shape[0] > 0:
                        best = np.inf
                        dstar = 0.0
                        for i in range(delta_grid.shape[0]):
                            val = _objective_nb(delta_grid[i], w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                                lo_next, dw_next, G, log_mode)
                            if val < best:
                                best = val
                                dstar = delta_grid[i]
                    elif a == b:
                        dstar = a
                        best = _objective_nb(a, w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                             lo_next, dw_next, G, log_mode)
                    else:
                        best = np.inf
                        kbest = 0
                        for i in range(N_SCAN):
                            val = _objective_nb(a + h_scan * i, w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                                lo_next, dw_next, G, log_mode)
                            if val < best:
                                best = val
                                kbest = i
                        dstar = a + h_scan * kbest
                        k0 = min(max(kbest - 1, 0), N_SCAN - 3)
                        lo = a + h_scan * k0
                        dist = 2.0 * h_scan
                        c = lo + INV_PHI2 * dist
                        d = lo + INV_PHI * dist
                        fc = _objective_nb(c, w, P, Pu, Pd, growth, p, psi_next, j, h2, lo_next, dw_next, G, log_mode)
                        fd = _objective_nb(d, w, P, Pu, Pd, growth, p, psi_next, j, h2, lo_next, dw_next, G, log_mode)
                        for _ in range(n_iter):
                            dist = INV_PHI * dist
                            if fc < fd:
                                d = c
                                fd = fc
                                c = lo + INV_PHI2 * dist
                                fc = _objective_nb(c, w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                                   lo_next, dw_next, G, log_mode)
                            else:
                                lo = c
                                c = d
                                fc = fd
                                d = lo + INV_PHI * dist
                                fd = _objective_nb(d, w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                                   lo_next, dw_next, G, log_mode)
                        mid = lo + 0.5 * dist
                        fmid = _objective_nb(mid, w, P, Pu, Pd, growth, p, psi_next, j, h2,
                                             lo_next, dw_next, G, log_mode)
                        if fmid < best:
                            best = fmid
                            dstar = mid
                    psi_out[j, h, g] = best
                    delta_out[j, h, g] = dstar
                    base = (w - dstar * P) * growth
                    xu = (base + dstar * Pu - lo_next) / dw_next
                    xd = (base + dstar * Pd - lo_next) / dw_next
                    span = (G - 1) + EDGE
                    if xu < -EDGE or xu > span or xd < -EDGE or xd > span:
                        clamps += 1
        return clamps


def sweep_slice(w_now, price_now, price_next, child_hit, reachable, psi_next, lo_next, dw_next,
                growth, p, a, b, delta_grid, log_mode, tol, use_numba=None):
    """One backward step of the dynamic program over slice ``t``.

    ``price_now``/``child_hit``/``reachable`` have shape (t+1, 2); ``price_next`` and
    ``psi_next`` cover slice t+1. Unreachable states come back as NaN.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    J, Gn = price_now.shape[0], w_now.shape[0]
    psi_out = np.full((J, 2, Gn), np.nan)
    delta_out = np.full((J, 2, Gn), np.nan)
    delta_grid = np.ascontiguousarray(delta_grid, dtype=np.float64)
    if use_numba:
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not importable")
        clamps = sweep_slice_numba(
            np.ascontiguousarray(w_now), np.ascontiguousarray(price_now),
            np.ascontiguousarray(price_next), np.ascontiguousarray(child_hit),
            np.ascontiguousarray(reachable), np.ascontiguousarray(psi_next),
            float(lo_next), float(dw_next), float(growth), float(p), float(a), float(b),
            delta_grid, bool(log_mode), float(tol), psi_out, delta_out,
        )
        return psi_out, delta_out, int(clamps)
    js, hs = np.nonzero(reachable)
    if js.size == 0:
        return psi_out, delta_out, 0
    h2 = child_hit[js, hs].astype(np.int64)
    psi, dstar, clamps = sweep_slice_numpy(
        w_now, price_now[js, hs], price_next[js + 1, h2], price_next[js, h2],
        (js + 1) * 2 + h2, js * 2 + h2, psi_next, lo_next, dw_next, growth, p,
        a, b, delta_grid, log_mode, tol,
    )
    psi_out[js, hs] = psi
    delta_out[js, hs] = dstar
    return psi_out, delta_out, clamps
