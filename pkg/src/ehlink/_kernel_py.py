"""Pure-Python slot loop; the fallback when the compiled kernel is missing.

Array layouts (shared with ``_ckernel.pyx``)::

    thr, gthr   float64[K+1]  source level and |h|^2 outage cut, by u + 1
    fparams     float64[5]    b_max, ready, silent, tx_outage, tx_success
    iparams     int64[6]      K, joint, gated, burn_in, batch_len, n_batches
    fstate      float64[8]    b_s, b_d, harvested_s, spent_s, overflow_s,
                              harvested_d, spent_d, overflow_d
    istate      int64[3]      u, packet start slot, global slot index
    counters    int64[n_batches, 7]
                              successes, outages, attempts over successes,
                              source ready, destination ready, both ready,
                              measured slots
"""


def run_chunk(es, ed, gain, thr, gthr, fparams, iparams, fstate, istate, counters):
    b_max, ready, silent, tx_outage, tx_success = (float(x) for x in fparams)
    K, joint, gated, burn_in, batch_len, n_batches = (int(x) for x in iparams)
    b_s, b_d, h_s, s_s, o_s, h_d, s_d, o_d = (float(x) for x in fstate)
    u, pkt_start, t = (int(x) for x in istate)
    thr = [float(x) for x in thr]
    gthr = [float(x) for x in gthr]
    es = es.tolist()
    ed = ed.tolist()
    gain = gain.tolist()
    acc = [[0] * 7 for _ in range(n_batches)]

    for i in range(len(es)):
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
            row = acc[b]
            row[3] += s_ready
            row[4] += d_ready
            row[5] += s_ready and d_ready
            row[6] += 1
            if nu <= 0 and pkt_start >= burn_in:
                if nu == -1:
                    row[0] += 1
                    row[2] += 1 if u <= 0 else u + 1
                else:
                    row[1] += 1
        u = nu
        t += 1

    fstate[:] = (b_s, b_d, h_s, s_s, o_s, h_d, s_d, o_d)
    istate[:] = (u, pkt_start, t)
    for b in range(n_batches):
        for j in range(7):
            counters[b, j] += acc[b][j]
