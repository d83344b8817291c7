"""Independent reference implementations written as plain loops over the defining formulas."""

import math

import numpy as np


def matmul_oracle(a, b):
    n, m = a.shape
    _, p = b.shape
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            for t in range(m):
                out[i, j] += a[i, t] * b[t, j]
    return out


def softmax_oracle(x, divisor):
    out = np.zeros_like(x)
    for i, row in enumerate(x):
        e = [np.exp(v / divisor - max(row) / divisor) for v in row]
        out[i] = np.array(e) / sum(e)
    return out


def conv_oracle(x, k, stride, pad):
    c, h, w = x.shape
    co, ci, kh, kw = k.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((co, ho, wo))
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                for cc in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            out[o, i, j] += k[o, cc, u, v] * xp[cc, i * stride + u, j * stride + v]
    return out


def sample_oracle(img, flow):
    """Per-pixel bilinear read with border clamp."""
    c, h, w = img.shape
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            x = min(max(j + flow[0, i, j], 0), w - 1)
            y = min(max(i + flow[1, i, j], 0), h - 1)
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            ax, ay = x - x0, y - y0
            out[:, i, j] = ((1 - ax) * (1 - ay) * img[:, y0, x0] + ax * (1 - ay) * img[:, y0, x1]
                            + (1 - ax) * ay * img[:, y1, x0] + ax * ay * img[:, y1, x1])
    return out


def eq1_oracle(q_in, k_in, v_in, p):
    """Literal per-head loops: scores against projected keys, softmax, weighted projected values."""
    heads = []
    for i in range(p.heads):
        wq, wk, wv = p.w_q[i].data, p.w_k[i].data, p.w_v[i].data
        e, f = p.e[i].data, p.f[i].data
        n, k = e.shape
        dk = wq.shape[1]
        q = [[sum(q_in[r, t] * wq[t, c] for t in range(wq.shape[0])) for c in range(dk)] for r in range(len(q_in))]
        kw = [[sum(k_in[r, t] * wk[t, c] for t in range(wk.shape[0])) for c in range(dk)] for r in range(n)]
        vw = [[sum(v_in[r, t] * wv[t, c] for t in range(wv.shape[0])) for c in range(dk)] for r in range(n)]
        kp = [[sum(e[r, j] * kw[r][c] for r in range(n)) for c in range(dk)] for j in range(k)]
        vp = [[sum(f[r, j] * vw[r][c] for r in range(n)) for c in range(dk)] for j in range(k)]
        out = np.zeros((len(q_in), dk))
        for r in range(len(q_in)):
            scores = [sum(q[r][c] * kp[j][c] for c in range(dk)) / math.sqrt(dk) for j in range(k)]
            top = max(scores)
            w = [math.exp(s - top) for s in scores]
            z = sum(w)
            for c in range(dk):
                out[r, c] = sum(w[j] / z * vp[j][c] for j in range(k))
        heads.append(out)
    return np.concatenate(heads, axis=1) @ p.w_o.data


def weights_oracle(eq, ek):
    c, h, w = eq.shape
    n = h * w
    pos = [(i, j) for i in range(h) for j in range(w)]
    out = np.zeros((n, n))
    for a, (i, j) in enumerate(pos):
        scores = [sum(eq[ch, i, j] * ek[ch, u, v] for ch in range(c)) / math.sqrt(c) for (u, v) in pos]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        for b in range(n):
            out[a, b] = ex[b] / sum(ex)
    return out


def attend_oracle(weights, f):
    c, h, w = f.shape
    pos = [(i, j) for i in range(h) for j in range(w)]
    out = np.zeros_like(f)
    for a, (i, j) in enumerate(pos):
        for ch in range(c):
            out[ch, i, j] = sum(weights[a, b] * f[ch, u, v] for b, (u, v) in enumerate(pos))
    return out


def ssim_oracle(x, y, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM from explicit 2D Gaussian-weighted window sums at every valid position."""
    ax = np.arange(window) - (window - 1) / 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    c, h, w = x.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            px = x[:, i:i + window, j:j + window]
            py = y[:, i:i + window, j:j + window]
            mx = (g * px).sum(axis=(1, 2))
            my = (g * py).sum(axis=(1, 2))
            vx = (g * (px - mx[:, None, None]) ** 2).sum(axis=(1, 2))
            vy = (g * (py - my[:, None, None]) ** 2).sum(axis=(1, 2))
            cov = (g * (px - mx[:, None, None]) * (py - my[:, None, None])).sum(axis=(1, 2))
            vals.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))
