"""Trajectory kernels.

``advance_numba`` and ``advance_numpy`` perform the same synchronous PBN
steps and consume the uniform buffer in the same order:

1. one gate draw ``u``; ``u < gate`` selects the function update, where
   ``gate = (1 - p)^n`` (or a forcing constant installed by the test hook);
2. function update: one draw per node with more than one predictor, in node
   order, resolved through that node's alias table;
3. perturbation: blocks of ``n`` per-node Bernoulli(p) draws, repeated until
   at least one bit flips.

A kernel stops early, at a step boundary, when the buffer cannot cover the
next step; the caller refills and calls again.  States are packed into
``uint64`` words, node ``i`` at bit ``i % 64`` of word ``i // 64``.

Projection records are written for local step indices
``j = first, first + lag, ...`` (``j0`` steps were already taken in the
current request); ``lag == 0`` disables recording.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit


@njit
def advance_numba(words, scratch, n, steps, u, pos, gate, p,
                  fstart, fcount, aprob, aalias, par_off, par_cnt, parents, tt_off, tt,
                  lit_node, lit_val, lag, first, j0, out):
    size = u.shape[0]
    nw = words.shape[0]
    one = np.uint64(1)
    done = 0
    while done < steps:
        if pos + n + 1 > size:
            break
        start = pos
        g = u[pos]
        pos += 1
        if g < gate:
            for w in range(nw):
                scratch[w] = 0
            for i in range(n):
                fs = fstart[i]
                nf = fcount[i]
                f = fs
                if nf > 1:
                    x = u[pos] * nf
                    pos += 1
                    c = int(x)
                    if c >= nf:
                        c = nf - 1
                    if x - c < aprob[fs + c]:
                        f = fs + c
                    else:
                        f = fs + aalias[fs + c]
                idx = 0
                o = par_off[f]
                for q in range(o, o + par_cnt[f]):
                    pa = parents[q]
                    bit = (words[pa >> 6] >> np.uint64(pa & 63)) & one
                    idx = (idx << 1) | int(bit)
                if tt[tt_off[f] + idx]:
                    scratch[i >> 6] |= one << np.uint64(i & 63)
            for w in range(nw):
                words[w] = scratch[w]
        else:
            flipped = False
            while pos + n <= size:
                for w in range(nw):
                    scratch[w] = 0
                for i in range(n):
                    if u[pos] < p:
                        scratch[i >> 6] |= one << np.uint64(i & 63)
                        flipped = True
                    pos += 1
                if flipped:
                    break
            if not flipped:
                pos = start
                break
            for w in range(nw):
                words[w] ^= scratch[w]
        done += 1
        if lag > 0:
            j = j0 + done
            if j >= first and (j - first) % lag == 0:
                rec = 1
                for q in range(lit_node.shape[0]):
                    nd = lit_node[q]
                    if int((words[nd >> 6] >> np.uint64(nd & 63)) & one) != lit_val[q]:
                        rec = 0
                        break
                out[(j - first) // lag] = rec
    return done, pos


def unpack(words: np.ndarray, n: int) -> np.ndarray:
    return np.unpackbits(words.view(np.uint8), count=n, bitorder="little")


def pack(bits: np.ndarray, nwords: int) -> np.ndarray:
    buf = np.zeros(nwords * 8, dtype=np.uint8)
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")
    buf[: packed.size] = packed
    return buf.view(np.uint64).copy()


def advance_numpy(words, cm, steps, u, pos, gate, p, lit_node, lit_val, lag, first, j0, out):
    """Vectorised-over-nodes reference path; one Python iteration per step."""
    n = cm.n
    size = u.shape[0]
    bits = unpack(words, n)
    multi = cm.multi_nodes
    nm = multi.size
    nf_multi = cm.fcount[multi]
    fs_multi = cm.fstart[multi]
    done = 0
    while done < steps:
        if pos + n + 1 > size:
            break
        start = pos
        g = u[pos]
        pos += 1
        if g < gate:
            f = cm.fstart.copy()
            if nm:
                x = u[pos : pos + nm] * nf_multi
                pos += nm
                c = np.minimum(x.astype(np.int64), nf_multi - 1)
                base = fs_multi + c
                f[multi] = np.where(x - c < cm.aprob[base], base, fs_multi + cm.aalias[base])
            idx = (bits[cm.padded_parents[f]] * cm.padded_weights[f]).sum(axis=1)
            bits = cm.tt[cm.tt_off[f] + idx]
        else:
            flipped = False
            while pos + n <= size:
                flips = u[pos : pos + n] < p
                pos += n
                if flips.any():
                    flipped = True
                    break
            if not flipped:
                pos = start
                break
            bits = bits ^ flips.astype(np.uint8)
        done += 1
        if lag > 0:
            j = j0 + done
            if j >= first and (j - first) % lag == 0:
                out[(j - first) // lag] = int(np.all(bits[lit_node] == lit_val))
    words[:] = pack(bits, words.size)
    return done, pos
