"""Straight-line pure-Python recurrent forward pass, independent of the
package's vectorized implementation.

Everything here is lists-of-floats and explicit loops: no numpy, no shared
helpers.  Used to cross-check cell updates, unrolls, readout pooling, and
losses on tiny models where an independent reimplementation is feasible.
"""
import math


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def matvec(w, x):
    return [math.fsum(wi * xi for wi, xi in zip(row, x)) for row in w]


def vadd(*vs):
    return [math.fsum(parts) for parts in zip(*vs)]


def vmul(a, b):
    return [ai * bi for ai, bi in zip(a, b)]


def lstm_step(x, h_prev, c_prev, p):
    """One peephole LSTM update from a params dict of nested lists."""
    i = [sigmoid(v) for v in vadd(matvec(p["w_xi"], x), matvec(p["w_hi"], h_prev),
                                  vmul(p["p_i"], c_prev), p["b_i"])]
    f = [sigmoid(v) for v in vadd(matvec(p["w_xf"], x), matvec(p["w_hf"], h_prev),
                                  vmul(p["p_f"], c_prev), p["b_f"])]
    g = [math.tanh(v) for v in vadd(matvec(p["w_xc"], x), matvec(p["w_hc"], h_prev),
                                    p["b_c"])]
    c = vadd(vmul(f, c_prev), vmul(i, g))
    o = [sigmoid(v) for v in vadd(matvec(p["w_xo"], x), matvec(p["w_ho"], h_prev),
                                  vmul(p["p_o"], c), p["b_o"])]
    h = vmul(o, [math.tanh(v) for v in c])
    return h, c


def rnn_step(x, h_prev, p):
    return [
        sigmoid(v)
        for v in vadd(matvec(p["w_xh"], x), matvec(p["w_hh"], h_prev), p["b_h"])
    ]


def unroll_lstm(xs, p):
    hid = len(p["b_i"])
    h, c = [0.0] * hid, [0.0] * hid
    hs = []
    for x in xs:
        h, c = lstm_step(x, h, c, p)
        hs.append(h)
    return hs, c


def unroll_rnn(xs, p):
    hid = len(p["b_h"])
    h = [0.0] * hid
    hs = []
    for x in xs:
        h = rnn_step(x, h, p)
        hs.append(h)
    return hs


def softmax(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = math.fsum(e)
    return [v / s for v in e]


def classify_last(hs_fwd, hs_bwd, w_out, b_out):
    """Softmax over the last forward state (and first-position backward
    state when a backward sequence is supplied)."""
    feat = list(hs_fwd[-1])
    if hs_bwd is not None:
        feat.extend(hs_bwd[0])
    logits = vadd(matvec(w_out, feat), b_out)
    return softmax(logits)


def classify_mean(hs_fwd, hs_bwd, w_out, b_out):
    steps = len(hs_fwd)
    feat = [math.fsum(h[j] for h in hs_fwd) / steps for j in range(len(hs_fwd[0]))]
    if hs_bwd is not None:
        feat.extend(
            math.fsum(h[j] for h in hs_bwd) / steps for j in range(len(hs_bwd[0]))
        )
    logits = vadd(matvec(w_out, feat), b_out)
    return softmax(logits)
