# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled slot loop. Same array layouts and arithmetic order as
``_kernel_py.run_chunk``, so both produce identical results."""

cimport cython


def run_chunk(const double[::1] es, const double[::1] ed, const double[::1] gain,
              const double[::1] thr, const double[::1] gthr,
              const double[::1] fparams, const long long[::1] iparams,
              double[::1] fstate, long long[::1] istate, long long[:, ::1] counters):
    cdef double b_max = fparams[0]
    cdef double ready = fparams[1]
    cdef double silent = fparams[2]
    cdef double tx_outage = fparams[3]
    cdef double tx_success = fparams[4]
    cdef long long K = iparams[0]
    cdef bint joint = iparams[1] != 0
    cdef bint gated = iparams[2] != 0
    cdef long long burn_in = iparams[3]
    cdef long long batch_len = iparams[4]
    cdef long long n_batches = iparams[5]
    cdef double b_s = fstate[0], b_d = fstate[1]
    cdef double h_s = fstate[2], s_s = fstate[3], o_s = fstate[4]
    cdef double h_d = fstate[5], s_d = fstate[6], o_d = fstate[7]
    cdef long long u = istate[0], pkt_start = istate[1], t = istate[2]
    cdef Py_ssize_t i, n = es.shape[0]
    cdef long long nu, b
    cdef double level, spend_s, spend_d, x
    cdef bint chan_ok, s_ready, d_ready, tx, success

    for i in range(n):
        if u <= 0:
            pkt_start = t
        level = thr[u + 1]
        chan_ok = gain[i] >= gthr[u + 1]
        s_ready = b_s >= level
        d_ready = b_d >= ready
        if joint:
            tx = s_ready and d_ready and (chan_ok or not gated)
        else:
            tx = s_ready
        spend_s = level if tx else 0.0
        if not d_ready or (gated and not chan_ok):
            spend_d = 0.0
        elif not tx:
            spend_d = 0.0 if joint else silent
        elif chan_ok:
            spend_d = tx_success
        else:
            spend_d = tx_outage
        success = tx and d_ready and chan_ok

        x = b_s - spend_s + es[i]
        if x > b_max:
            o_s += x - b_max
            x = b_max
        b_s = x
        h_s += es[i]
        s_s += spend_s
        x = b_d - spend_d + ed[i]
        if x > b_max:
            o_d += x - b_max
            x = b_max
        b_d = x
        h_d += ed[i]
        s_d += spend_d

        if success:
            nu = -1
        elif u == -1:
            nu = 1 if K > 1 else 0
        elif u == K - 1:
            nu = 0
        else:
            nu = u + 1

        if t >= burn_in:
            b = (t - burn_in) // batch_len
            if b >= n_batches:
                b = n_batches - 1
            counters[b, 3] += s_ready
            counters[b, 4] += d_ready
            counters[b, 5] += s_ready and d_ready
            counters[b, 6] += 1
            if nu <= 0 and pkt_start >= burn_in:
                if nu == -1:
                    counters[b, 0] += 1
                    counters[b, 2] += 1 if u <= 0 else u + 1
                else:
                    counters[b, 1] += 1
        u = nu
        t += 1

    fstate[0] = b_s
    fstate[1] = b_d
    fstate[2] = h_s
    fstate[3] = s_s
    fstate[4] = o_s
    fstate[5] = h_d
    fstate[6] = s_d
    fstate[7] = o_d
    istate[0] = u
    istate[1] = pkt_start
    istate[2] = t
