"""Compiled per-neuron kernels shared by the serial and parallel backends.

Every kernel operates on a half-open row range [lo, hi), reads shared inputs,
and writes only rows it owns, so any partition of the rows produces results
bit-identical to a single full-range call: with strict=True each row's dot
product is summed in fixed index order by whichever call owns it, and row
values never depend on the partition. That property is what makes the
cross-backend equivalence guarantee hold by construction.

strict=False switches the dot products to a four-lane interleaved
accumulation — a different association order, kept within 1e-10 of the
strict result — and models reduction orders a reduction-tree backend would
produce.

The fused training pass runs all four per-sample stages inside one parallel
region: workers loop over samples themselves and meet at spin barriers
between stages. Spin barriers require every logical worker to be running
concurrently, so callers must clamp the worker count to the thread cap
before launching (see parallel.py).
"""

from __future__ import annotations

import numpy as np
from numba import config as numba_config
from numba import njit, prange

# int64 slots per worker in the barrier array; one x86 cache line apart to
# avoid false sharing between spinning workers
PAD = 8


def hardware_thread_cap() -> int:
    """Upper bound on concurrently running numba threads."""
    return int(numba_config.NUMBA_NUM_THREADS)


@njit(cache=True, nogil=True, inline="always")
def _dot_strict(row, x):
    s = 0.0
    for k in range(x.shape[0]):
        s += row[k] * x[k]
    return s


@njit(cache=True, nogil=True, inline="always")
def _dot_lanes(row, x):
    # four interleaved partial sums; association differs from _dot_strict
    n = x.shape[0]
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    k = 0
    while k + 4 <= n:
        s0 += row[k] * x[k]
        s1 += row[k + 1] * x[k + 1]
        s2 += row[k + 2] * x[k + 2]
        s3 += row[k + 3] * x[k + 3]
        k += 4
    tail = 0.0
    while k < n:
        tail += row[k] * x[k]
        k += 1
    return ((s0 + s1) + (s2 + s3)) + tail


@njit(cache=True, nogil=True, inline="always")
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True, nogil=True)
def forward_hidden_rows(w1, b1, x, hidden, lo, hi, strict):
    for i in range(lo, hi):
        s = _dot_strict(w1[i], x) if strict else _dot_lanes(w1[i], x)
        hidden[i] = _sigmoid(s + b1[i])


@njit(cache=True, nogil=True)
def forward_output_rows(w2, b2, hidden, out, lo, hi, strict):
    for j in range(lo, hi):
        s = _dot_strict(w2[j], hidden) if strict else _dot_lanes(w2[j], hidden)
        out[j] = _sigmoid(s + b2[j])


@njit(cache=True, nogil=True)
def output_delta_rows(target, out, dout, lo, hi):
    # dE/dnet for E = sum((t - y)^2) / 2 with sigmoid outputs
    for j in range(lo, hi):
        y = out[j]
        dout[j] = (target[j] - y) * y * (1.0 - y)


@njit(cache=True, nogil=True)
def hidden_delta_update_rows(w1, b1, w2, dout, hidden, x, lr, update_bias,
                             lo, hi, strict):
    # reads w2 at its pre-update values; the w2 update stage must not have
    # run yet for this sample
    o = w2.shape[0]
    n = w1.shape[1]
    for i in range(lo, hi):
        if strict:
            s = 0.0
            for j in range(o):
                s += w2[j, i] * dout[j]
        else:
            s0 = 0.0
            s1 = 0.0
            j = 0
            while j + 2 <= o:
                s0 += w2[j, i] * dout[j]
                s1 += w2[j + 1, i] * dout[j + 1]
                j += 2
            s = s0 + s1
            while j < o:
                s += w2[j, i] * dout[j]
                j += 1
        step = lr * hidden[i] * (1.0 - hidden[i]) * s
        for k in range(n):
            w1[i, k] += step * x[k]
        if update_bias:
            b1[i] += step


@njit(cache=True, nogil=True)
def output_update_rows(w2, b2, dout, hidden, lr, update_bias, lo, hi):
    h = w2.shape[1]
    for j in range(lo, hi):
        step = lr * dout[j]
        for i in range(h):
            w2[j, i] += step * hidden[i]
        if update_bias:
            b2[j] += step


def block_bounds(total: int, workers: int) -> np.ndarray:
    """Contiguous block partition of [0, total) into ``workers`` pieces."""
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return np.linspace(0, total, workers + 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Per-stage parallel regions (one fork/join per call)


@njit(cache=True, parallel=True)
def par_forward_hidden_blocks(w1, b1, x, hidden, hb, nw, strict):
    for w in prange(nw):
        forward_hidden_rows(w1, b1, x, hidden, hb[w], hb[w + 1], strict)


@njit(cache=True, parallel=True)
def par_forward_output_blocks(w2, b2, hidden, out, ob, nw, strict):
    for w in prange(nw):
        forward_output_rows(w2, b2, hidden, out, ob[w], ob[w + 1], strict)


@njit(cache=True, parallel=True)
def par_hidden_delta_update_blocks(w1, b1, w2, dout, hidden, x, lr,
                                   update_bias, hb, nw, strict):
    for w in prange(nw):
        hidden_delta_update_rows(w1, b1, w2, dout, hidden, x, lr,
                                 update_bias, hb[w], hb[w + 1], strict)


@njit(cache=True, parallel=True)
def par_output_update_blocks(w2, b2, dout, hidden, lr, update_bias, ob, nw):
    for w in prange(nw):
        output_update_rows(w2, b2, dout, hidden, lr, update_bias,
                           ob[w], ob[w + 1])


# ---------------------------------------------------------------------------
# Fused training pass: one parallel region per pass over the samples


@njit(cache=True, nogil=True)
def _spin_barrier(arrive, w, nw, gen):
    """All-to-all barrier; each worker owns one padded slot.

    The re-store of the worker's own slot inside the poll loop forces the
    peer loads to be re-read every iteration instead of being hoisted.
    """
    arrive[w * PAD] = gen
    waiting = True
    while waiting:
        arrive[w * PAD] = gen
        waiting = False
        for u in range(nw):
            if arrive[u * PAD] < gen:
                waiting = True
                break
    return gen + 1


@njit(cache=True, nogil=True)
def _worker_pass(w, nw, w1, b1, w2, b2, X, T, lr, update_bias, strict,
                 hb, ob, hidden, out, dout, arrive, sqe):
    """One worker's walk over the sample batch; four stages per sample.

    Stage order within a sample: forward hidden, forward output (+ output
    deltas), hidden-side delta + first-layer update (reads pre-update w2),
    then the output-layer update. Samples remain strictly sequential.
    """
    gen = 1
    for s in range(X.shape[0]):
        x = X[s]
        t = T[s]
        forward_hidden_rows(w1, b1, x, hidden, hb[w], hb[w + 1], strict)
        gen = _spin_barrier(arrive, w, nw, gen)

        forward_output_rows(w2, b2, hidden, out, ob[w], ob[w + 1], strict)
        output_delta_rows(t, out, dout, ob[w], ob[w + 1])
        gen = _spin_barrier(arrive, w, nw, gen)

        hidden_delta_update_rows(w1, b1, w2, dout, hidden, x, lr,
                                 update_bias, hb[w], hb[w + 1], strict)
        if w == 0:
            e = 0.0
            for j in range(out.shape[0]):
                e += (t[j] - out[j]) ** 2
            sqe[0] += e
        gen = _spin_barrier(arrive, w, nw, gen)

        output_update_rows(w2, b2, dout, hidden, lr, update_bias,
                           ob[w], ob[w + 1])
        gen = _spin_barrier(arrive, w, nw, gen)


@njit(cache=True, parallel=True)
def fused_pass(w1, b1, w2, b2, X, T, lr, update_bias, strict, hb, ob, nw,
               hidden, out, dout, arrive, sqe):
    for w in prange(nw):
        _worker_pass(w, nw, w1, b1, w2, b2, X, T, lr, update_bias, strict,
                     hb, ob, hidden, out, dout, arrive, sqe)


def serial_pass(w1, b1, w2, b2, X, T, lr, update_bias=True) -> float:
    """Reference pass: identical stage sequence, full row ranges, one thread.

    Returns the summed pre-update squared error over the batch.
    """
    h = w1.shape[0]
    o = w2.shape[0]
    hidden = np.empty(h)
    out = np.empty(o)
    dout = np.empty(o)
    sqe = 0.0
    for s in range(X.shape[0]):
        x = X[s]
        t = T[s]
        forward_hidden_rows(w1, b1, x, hidden, 0, h, True)
        forward_output_rows(w2, b2, hidden, out, 0, o, True)
        output_delta_rows(t, out, dout, 0, o)
        sqe += float(np.sum((t - out) ** 2))
        hidden_delta_update_rows(w1, b1, w2, dout, hidden, x, lr,
                                 update_bias, 0, h, True)
        output_update_rows(w2, b2, dout, hidden, lr, update_bias, 0, o)
    return sqe
