"""Compiled inner loops for the hot tape operations.

All kernels take 4-D ``(B, C, F, T)`` arrays; ``axis`` is 2 (frequency)
or 3 (time).
"""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def dw_forward(xp, w, axis, dilation, n_out):
    nb, nc, nf, nt = xp.shape
    k = w.shape[1]
    if axis == 2:
        out = np.zeros((nb, nc, n_out, nt), dtype=xp.dtype)
        for b in range(nb):
            for c in range(nc):
                for j in range(k):
                    wj = w[c, j]
                    off = j * dilation
                    for f in range(n_out):
                        for t in range(nt):
                            out[b, c, f, t] += wj * xp[b, c, f + off, t]
    else:
        out = np.zeros((nb, nc, nf, n_out), dtype=xp.dtype)
        for b in range(nb):
            for c in range(nc):
                for j in range(k):
                    wj = w[c, j]
                    off = j * dilation
                    for f in range(nf):
                        for t in range(n_out):
                            out[b, c, f, t] += wj * xp[b, c, f, t + off]
    return out


@njit(cache=True, fastmath=False)
def dw_backward(xp, w, g, axis, dilation, need_x, need_w):
    nb, nc, nf, nt = xp.shape
    k = w.shape[1]
    gx = np.zeros(xp.shape if need_x else (0, 0, 0, 0), dtype=g.dtype)
    gw = np.zeros((nc, k) if need_w else (0, 0), dtype=g.dtype)
    gb, gc, gf, gt = g.shape
    for b in range(gb):
        for c in range(gc):
            for j in range(k):
                off = j * dilation
                wc = np.conj(w[c, j])
                acc = 0j
                for f in range(gf):
                    for t in range(gt):
                        if axis == 2:
                            fi, ti = f + off, t
                        else:
                            fi, ti = f, t + off
                        gv = g[b, c, f, t]
                        if need_x:
                            gx[b, c, fi, ti] += wc * gv
                        if need_w:
                            acc += np.conj(xp[b, c, fi, ti]) * gv
                if need_w:
                    gw[c, j] += acc
    return gx, gw


@njit(cache=True)
def prelu_forward(x, a, b):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        re = flat_x[i].real
        im = flat_x[i].imag
        if not re > 0:
            re = a * re
        if not im > 0:
            im = b * im
        flat_o[i] = complex(re, im)
    return out


@njit(cache=True)
def prelu_backward(x, g, a, b):
    gx = np.empty_like(g)
    flat_x = x.ravel()
    flat_g = g.ravel()
    flat_o = gx.ravel()
    sa = 0.0
    sb = 0.0
    for i in range(flat_x.size):
        gr = flat_g[i].real
        gi = flat_g[i].imag
        xr = flat_x[i].real
        xi = flat_x[i].imag
        if not xr > 0:
            sa += xr * gr
            gr = a * gr
        if not xi > 0:
            sb += xi * gi
            gi = b * gi
        flat_o[i] = complex(gr, gi)
    return gx, sa, sb


@njit(cache=True)
def frame_freq_conv(x, w, dilation):
    """'Same'-padded dilated depthwise correlation of one (C, F) frame."""
    nc, nf = x.shape
    k = w.shape[1]
    lo = ((k - 1) * dilation) // 2
    out = np.zeros((nc, nf), dtype=x.dtype)
    for c in range(nc):
        for j in range(k):
            wj = w[c, j]
            off = j * dilation - lo
            for f in range(nf):
                src = f + off
                if 0 <= src < nf:
                    out[c, f] += wj * x[c, src]
    return out


@njit(cache=True)
def frame_time_conv(x, hist, w, dilation):
    """Causal dilated depthwise step; ``hist`` (C, F, span) holds past inputs.

    Returns the output frame and shifts ``x`` into ``hist`` in place.
    """
    nc, nf = x.shape
    k = w.shape[1]
    span = hist.shape[2]
    out = np.zeros((nc, nf), dtype=x.dtype)
    for c in range(nc):
        for f in range(nf):
            acc = w[c, k - 1] * x[c, f]
            for j in range(k - 1):
                acc += w[c, j] * hist[c, f, j * dilation]
            out[c, f] = acc
            for s in range(span - 1):
                hist[c, f, s] = hist[c, f, s + 1]
            if span > 0:
                hist[c, f, span - 1] = x[c, f]
    return out
