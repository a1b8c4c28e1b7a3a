"""Numba kernels: packed GF(2) elimination and the min-weight coset search.

Binary matrices are stored row-wise as ``uint64`` words, bit ``j`` of a row
living in word ``j >> 6`` at position ``j & 63``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_U1 = np.uint64(1)

UNDECIDED = 0
ZERO = 1
ONE = 2


def pack_rows(a: np.ndarray) -> np.ndarray:
    """Pack a 0/1 matrix ``(m, n)`` into ``(m, ceil(n/64))`` uint64 words."""
    a = np.ascontiguousarray(a, dtype=np.uint8)
    m, n = a.shape
    words = max(1, (n + 63) // 64)
    padded = np.zeros((m, words * 64), dtype=np.uint8)
    padded[:, :n] = a
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(m, words).copy()


def unpack_rows(p: np.ndarray, n: int) -> np.ndarray:
    m = p.shape[0]
    bits = np.unpackbits(p.view(np.uint8).reshape(m, -1), axis=1, bitorder="little")
    return bits[:, :n].copy()


@nb.njit(cache=True)
def _get(row, j):
    return (row[j >> 6] >> np.uint64(j & 63)) & _U1


@nb.njit(cache=True)
def _popparity(x):
    x ^= x >> np.uint64(32)
    x ^= x >> np.uint64(16)
    x ^= x >> np.uint64(8)
    x ^= x >> np.uint64(4)
    x ^= x >> np.uint64(2)
    x ^= x >> np.uint64(1)
    return x & _U1


@nb.njit(cache=True)
def rref_inplace(rows, trans, ncols):
    """Reduced row echelon form over GF(2), tracking row operations in ``trans``.

    Returns ``(rank, pivot_columns)``; afterwards ``trans @ A_original == rows``.
    """
    m = rows.shape[0]
    wa = rows.shape[1]
    wt = trans.shape[1]
    piv = np.empty(min(m, ncols), dtype=np.int64)
    rank = 0
    for col in range(ncols):
        if rank == m:
            break
        w = col >> 6
        bit = _U1 << np.uint64(col & 63)
        sel = -1
        for r in range(rank, m):
            if rows[r, w] & bit:
                sel = r
                break
        if sel < 0:
            continue
        if sel != rank:
            for k in range(wa):
                t = rows[sel, k]
                rows[sel, k] = rows[rank, k]
                rows[rank, k] = t
            for k in range(wt):
                t = trans[sel, k]
                trans[sel, k] = trans[rank, k]
                trans[rank, k] = t
        for r in range(m):
            if r != rank and (rows[r, w] & bit):
                for k in range(w, wa):
                    rows[r, k] ^= rows[rank, k]
                for k in range(wt):
                    trans[r, k] ^= trans[rank, k]
        piv[rank] = col
        rank += 1
    return rank, piv[:rank].copy()


@nb.njit(cache=True)
def apply_trans(trans, b_packed, rank, piv, nvars, x_out):
    """Particular solution from a tracked elimination.

    Writes ``x_out`` and returns -1 if consistent, else the first echelon row
    (``>= rank``) whose transformed right-hand side is nonzero.
    """
    for v in range(nvars):
        x_out[v] = 0
    m = trans.shape[0]
    for r in range(m):
        acc = np.uint64(0)
        for k in range(trans.shape[1]):
            acc ^= trans[r, k] & b_packed[k]
        bit = _popparity(acc)
        if r < rank:
            x_out[piv[r]] = np.uint8(bit)
        elif bit:
            return r
    return -1


@nb.njit(cache=True)
def kernel_csr(rows, rank, piv, ncols):
    """Kernel basis of an RREF matrix as CSR lists of variable indices."""
    is_piv = np.zeros(ncols, dtype=np.bool_)
    for r in range(rank):
        is_piv[piv[r]] = True
    nfree = ncols - rank
    ptr = np.zeros(nfree + 1, dtype=np.int64)
    f = 0
    for col in range(ncols):
        if is_piv[col]:
            continue
        cnt = 1
        for r in range(rank):
            if _get(rows[r], col):
                cnt += 1
        ptr[f + 1] = ptr[f] + cnt
        f += 1
    idx = np.empty(ptr[nfree], dtype=np.int32)
    f = 0
    for col in range(ncols):
        if is_piv[col]:
            continue
        p = ptr[f]
        idx[p] = col
        p += 1
        for r in range(rank):
            if _get(rows[r], col):
                idx[p] = piv[r]
                p += 1
        f += 1
    return ptr, idx


@nb.njit(cache=True)
def _greedy(x, w, kptr, kidx):
    """Flip kernel vectors while any single flip lowers the objective."""
    nk = kptr.shape[0] - 1
    improved = True
    while improved:
        improved = False
        for f in range(nk):
            delta = 0
            for p in range(kptr[f], kptr[f + 1]):
                v = kidx[p]
                delta += w[v] if x[v] == 0 else -w[v]
            if delta < 0:
                for p in range(kptr[f], kptr[f + 1]):
                    x[kidx[p]] ^= 1
                improved = True


@nb.njit(cache=True)
def _objective(x, w):
    s = 0
    for v in range(x.shape[0]):
        if x[v]:
            s += w[v]
    return s


@nb.njit(cache=True)
def _enumerate(x, w, kptr, kidx):
    """Exhaustive Gray-code walk over the coset; leaves the optimum in ``x``."""
    nk = kptr.shape[0] - 1
    cur = x.copy()
    cost = _objective(cur, w)
    best = cost
    total = np.int64(1) << np.int64(nk)
    for i in range(1, total):
        f = 0
        t = i
        while (t & 1) == 0:
            t >>= 1
            f += 1
        for p in range(kptr[f], kptr[f + 1]):
            v = kidx[p]
            if cur[v]:
                cost -= w[v]
            else:
                cost += w[v]
            cur[v] ^= 1
        if cost < best:
            best = cost
            x[:] = cur
    return total


@nb.njit(cache=True)
def _assign(v, val, status, w, deg, vptr, vcon, undec, viol, st):
    # st = [cost, negsum, zcap, nviol]
    status[v] = val
    wv = w[v]
    if wv < 0:
        st[1] -= wv
    if wv <= 0:
        st[2] -= deg[v]
    if val == ONE:
        st[0] += wv
    for p in range(vptr[v], vptr[v + 1]):
        c = vcon[p]
        undec[c] -= 1
        if val == ONE:
            viol[c] ^= 1
            st[3] += 1 if viol[c] else -1


@nb.njit(cache=True)
def _unassign(v, status, w, deg, vptr, vcon, undec, viol, st):
    wv = w[v]
    if wv < 0:
        st[1] += wv
    if wv <= 0:
        st[2] += deg[v]
    one = status[v] == ONE
    if one:
        st[0] -= wv
    for p in range(vptr[v], vptr[v + 1]):
        c = vcon[p]
        undec[c] += 1
        if one:
            viol[c] ^= 1
            st[3] += 1 if viol[c] else -1
    status[v] = UNDECIDED


@nb.njit(cache=True)
def _constraint_positions(vptr, vcon, cptr, cvar):
    """For every (constraint, slot) entry, the matching (variable, slot) index."""
    cpos = np.full(cvar.shape[0], -1, dtype=np.int64)
    nv = vptr.shape[0] - 1
    for v in range(nv):
        for p in range(vptr[v], vptr[v + 1]):
            c = vcon[p]
            for q in range(cptr[c], cptr[c + 1]):
                if cvar[q] == v and cpos[q] < 0:
                    cpos[q] = p
                    break
    return cpos


_INF = 1e18


@nb.njit(cache=True)
def _agg(c, lamc, cptr, cvar, ns, par, m1, a1, m2, a2):
    """Recompute the summary of constraint ``c`` from ``lamc``.

    ``ns``: sum of negative multipliers, ``par``: their count mod 2,
    ``m1``/``m2``: two smallest magnitudes, owned by ``a1``/``a2``.
    Decided variables carry ``+_INF`` and so never contribute.
    """
    s = 0.0
    pr = 0
    b1 = _INF
    b2 = _INF
    g1 = -1
    g2 = -1
    for q in range(cptr[c], cptr[c + 1]):
        lv = lamc[q]
        if lv >= _INF:
            continue
        if lv < 0:
            s += lv
            pr ^= 1
            lv = -lv
        if lv < b1:
            b2 = b1
            g2 = g1
            b1 = lv
            g1 = cvar[q]
        elif lv < b2:
            b2 = lv
            g2 = cvar[q]
    ns[c] = s
    par[c] = pr
    m1[c] = b1
    a1[c] = g1
    m2[c] = b2
    a2[c] = g2


@nb.njit(cache=True)
def _sweeps(lam, lamc, vpos, red, w, status, viol, vptr, vcon, cptr, cvar, ns, par, m1, a1, m2, a2, sweeps, delta):
    """Block coordinate ascent on the Lagrangian dual of the parity constraints.

    Each undecided variable's weight is split over its constraints
    (``lam``); every sweep re-splits one variable at a time so the sum of
    the per-constraint minima cannot decrease.  ``red`` receives the
    variable's reduced cost (negative: the dual prefers it set).
    """
    nv = w.shape[0]
    for _ in range(sweeps):
        for f in range(nv):
            if status[f] != UNDECIDED:
                continue
            k = vptr[f + 1] - vptr[f]
            if k == 0:
                red[f] = w[f]
                continue
            sumd = 0.0
            for p in range(vptr[f], vptr[f + 1]):
                c = vcon[p]
                lf = lam[p]
                nsx = ns[c]
                px = par[c]
                if lf < 0:
                    nsx -= lf
                    px ^= 1
                mn = m2[c] if a1[c] == f else m1[c]
                if mn >= _INF:
                    # f alone decides this constraint
                    d = 1e6 if viol[c] == 0 else -1e6
                elif px != viol[c]:
                    d = mn
                else:
                    d = -mn
                delta[p - vptr[f]] = d
                sumd += d
            r = w[f] - sumd
            red[f] = r
            share = r / k
            for p in range(vptr[f], vptr[f + 1]):
                c = vcon[p]
                old = lam[p]
                new = delta[p - vptr[f]] + share
                lam[p] = new
                lamc[vpos[p]] = new
                if old < 0:
                    ns[c] -= old
                    par[c] ^= 1
                if new < 0:
                    ns[c] += new
                    par[c] ^= 1
                a = -new if new < 0 else new
                if a1[c] == f:
                    if a <= m2[c]:
                        m1[c] = a
                    else:
                        _agg(c, lamc, cptr, cvar, ns, par, m1, a1, m2, a2)
                elif a2[c] == f:
                    if a < m1[c]:
                        m2[c] = m1[c]
                        a2[c] = a1[c]
                        m1[c] = a
                        a1[c] = f
                    else:
                        # may have grown past a third variable
                        _agg(c, lamc, cptr, cvar, ns, par, m1, a1, m2, a2)
                elif a < m1[c]:
                    m2[c] = m1[c]
                    a2[c] = a1[c]
                    m1[c] = a
                    a1[c] = f
                elif a < m2[c]:
                    m2[c] = a
                    a2[c] = f


@nb.njit(cache=True)
def _lower_bound(undec, viol, ns, par, m1):
    lb = 0.0
    for c in range(undec.shape[0]):
        if undec[c] == 0:
            continue
        lb += ns[c]
        if par[c] != viol[c]:
            lb += m1[c]
    return lb


@nb.njit(cache=True)
def _set(v, val, status, w, deg, vptr, vcon, undec, viol, st, lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2):
    _assign(v, val, status, w, deg, vptr, vcon, undec, viol, st)
    for p in range(vptr[v], vptr[v + 1]):
        lamc[vpos[p]] = _INF
        _agg(vcon[p], lamc, cptr, cvar, ns, par, m1, a1, m2, a2)


@nb.njit(cache=True)
def _unset(v, status, w, deg, vptr, vcon, undec, viol, st, lam, lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2):
    _unassign(v, status, w, deg, vptr, vcon, undec, viol, st)
    for p in range(vptr[v], vptr[v + 1]):
        lamc[vpos[p]] = lam[p]
        _agg(vcon[p], lamc, cptr, cvar, ns, par, m1, a1, m2, a2)


@nb.njit(cache=True)
def _bnb(x, w, b, vptr, vcon, cptr, cvar, budget, root_sweeps=30, node_sweeps=2):
    """Depth-first branch and bound for nonnegative weights.

    ``x`` holds a feasible incumbent on entry and the best solution found on
    exit.  Each node applies unit propagation (a constraint with one
    undecided variable fixes it), then bounds the subtree by the partial cost
    plus a Lagrangian dual of the remaining parity constraints, improved by
    warm-started coordinate-ascent sweeps.  Branching takes the undecided
    variable of a violated constraint with the lowest reduced cost and tries
    its preferred value first.  Returns ``(nodes, completed)``.
    """
    nv = w.shape[0]
    nc = b.shape[0]
    best = _objective(x, w)

    status = np.zeros(nv, dtype=np.int8)
    viol = b.copy()
    st = np.zeros(4, dtype=np.int64)
    for c in range(nc):
        st[3] += viol[c]
    undec = np.empty(nc, dtype=np.int64)
    for c in range(nc):
        undec[c] = cptr[c + 1] - cptr[c]
    deg = np.empty(nv, dtype=np.int64)
    maxdeg = 1
    for v in range(nv):
        deg[v] = vptr[v + 1] - vptr[v]
        if deg[v] > maxdeg:
            maxdeg = deg[v]
        if w[v] <= 0:
            st[2] += deg[v]

    cpos = _constraint_positions(vptr, vcon, cptr, cvar)
    lam = np.empty(vcon.shape[0], dtype=np.float64)
    vpos = np.empty(vcon.shape[0], dtype=np.int64)
    for q in range(cpos.shape[0]):
        vpos[cpos[q]] = q
    lamc = np.empty(cvar.shape[0], dtype=np.float64)
    for v in range(nv):
        for p in range(vptr[v], vptr[v + 1]):
            lam[p] = w[v] / deg[v]
            lamc[vpos[p]] = lam[p]
    ns = np.zeros(nc, dtype=np.float64)
    par = np.zeros(nc, dtype=np.int8)
    m1 = np.zeros(nc, dtype=np.float64)
    m2 = np.zeros(nc, dtype=np.float64)
    a1 = np.zeros(nc, dtype=np.int64)
    a2 = np.zeros(nc, dtype=np.int64)
    for c in range(nc):
        _agg(c, lamc, cptr, cvar, ns, par, m1, a1, m2, a2)
    red = np.zeros(nv, dtype=np.float64)
    delta = np.zeros(maxdeg, dtype=np.float64)
    first_dual = True

    # one frame per branching decision: variable, value tried first,
    # whether the second value was taken, trail length before the decision
    fr_var = np.zeros(nv + 1, dtype=np.int64)
    fr_val = np.zeros(nv + 1, dtype=np.int8)
    fr_flip = np.zeros(nv + 1, dtype=np.uint8)
    fr_mark = np.zeros(nv + 1, dtype=np.int64)
    trail = np.zeros(nv, dtype=np.int64)
    tlen = 0
    depth = 0
    nodes = 0
    completed = True

    while True:
        nodes += 1
        if nodes > budget:
            completed = False
            break
        conflict = False
        changed = True
        while changed and not conflict:
            changed = False
            for c in range(nc):
                u = undec[c]
                if u == 0:
                    if viol[c]:
                        conflict = True
                        break
                elif u == 1:
                    for p in range(cptr[c], cptr[c + 1]):
                        v = cvar[p]
                        if status[v] == UNDECIDED:
                            _set(v, ONE if viol[c] else ZERO, status, w, deg, vptr, vcon, undec, viol, st,
                                 lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2)
                            trail[tlen] = v
                            tlen += 1
                            break
                    changed = True
        if not conflict and st[0] < best:
            if st[3] == 0:
                best = st[0]
                for v in range(nv):
                    x[v] = 1 if status[v] == ONE else 0
            else:
                sweeps = root_sweeps if first_dual else node_sweeps
                first_dual = False
                _sweeps(lam, lamc, vpos, red, w, status, viol, vptr, vcon, cptr, cvar,
                        ns, par, m1, a1, m2, a2, sweeps, delta)
                lb = st[0] + _lower_bound(undec, viol, ns, par, m1)
                if np.ceil(lb - 1e-6) < best:
                    # undecided variable of a violated constraint with the
                    # lowest reduced cost, preferred value first
                    vsel = -1
                    vbest = _INF
                    for c in range(nc):
                        if viol[c] == 0 or undec[c] == 0:
                            continue
                        for p in range(cptr[c], cptr[c + 1]):
                            v = cvar[p]
                            if status[v] == UNDECIDED and red[v] < vbest:
                                vbest = red[v]
                                vsel = v
                    fr_var[depth] = vsel
                    fr_val[depth] = ONE if vbest < 0 else ZERO
                    fr_flip[depth] = 0
                    fr_mark[depth] = tlen
                    _set(vsel, fr_val[depth], status, w, deg, vptr, vcon, undec, viol, st,
                         lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2)
                    trail[tlen] = vsel
                    tlen += 1
                    depth += 1
                    continue
        # backtrack to the deepest decision whose other value is untried
        moved = False
        while depth > 0:
            d = depth - 1
            while tlen > fr_mark[d]:
                tlen -= 1
                _unset(trail[tlen], status, w, deg, vptr, vcon, undec, viol, st,
                       lam, lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2)
            if fr_flip[d] == 0:
                fr_flip[d] = 1
                v = fr_var[d]
                _set(v, ZERO + ONE - fr_val[d], status, w, deg, vptr, vcon, undec, viol, st,
                     lamc, vpos, cptr, cvar, ns, par, m1, a1, m2, a2)
                trail[tlen] = v
                tlen += 1
                moved = True
                break
            depth -= 1
        if not moved:
            break
    return nodes, completed


@nb.njit(cache=True)
def coset_core(x, w, b, vptr, vcon, cptr, cvar, kptr, kidx, budget, exact_threshold):
    """Improve the particular solution ``x`` in place.

    Negative-weight variables are complemented first so the search only sees
    nonnegative weights.  Small cosets are enumerated outright.  Otherwise
    branch and bound runs; if it exhausts ``budget`` on a coset within
    ``exact_threshold`` free variables, the coset is enumerated instead.
    Returns ``(nodes, optimal)``.
    """
    nfree = kptr.shape[0] - 1
    if nfree == 0:
        return 0, True
    _greedy(x, w, kptr, kidx)
    if nfree <= 12:
        return _enumerate(x, w, kptr, kidx), True
    nv = w.shape[0]
    wp = np.empty(nv, dtype=np.int64)
    bp = b.copy()
    flip = np.zeros(nv, dtype=np.uint8)
    for v in range(nv):
        if w[v] < 0:
            flip[v] = 1
            wp[v] = -w[v]
            x[v] ^= 1
            for p in range(vptr[v], vptr[v + 1]):
                bp[vcon[p]] ^= 1
        else:
            wp[v] = w[v]
    nodes, done = _bnb(x, wp, bp, vptr, vcon, cptr, cvar, budget)
    for v in range(nv):
        x[v] ^= flip[v]
    if not done and nfree <= exact_threshold:
        nodes += _enumerate(x, w, kptr, kidx)
        done = True
    return nodes, done


@nb.njit(cache=True)
def reduce_boxes(
    syn, w, fcg, bnd2,
    e_off, e_ids, f_off, f_ids, vp_off, vptr, vc_off, vcon, cp_off, cptr, cv_off, cvar,
    kp_off, kptr, ki_off, kidx, t_off, t_words, trans, p_off, piv, ranks,
    budget, exact_threshold, stats,
):
    """Solve every box of one level in order, updating ``syn``, ``w`` and ``fcg`` in place.

    ``stats`` accumulates ``[solves, exact solves, nodes, failing box]``.
    Returns False if a box system is infeasible.
    """
    nbox = e_off.shape[0] - 1
    for bx in range(nbox):
        e0, e1 = e_off[bx], e_off[bx + 1]
        f0, f1 = f_off[bx], f_off[bx + 1]
        ne = e1 - e0
        nf = f1 - f0
        anyb = False
        for k in range(ne):
            if syn[e_ids[e0 + k]]:
                anyb = True
                break
        anyneg = False
        for k in range(nf):
            if w[f_ids[f0 + k]] < 0:
                anyneg = True
                break
        if not anyb and not anyneg:
            continue
        stats[0] += 1
        b = np.zeros(ne, dtype=np.uint8)
        words = t_words[bx]
        bp = np.zeros(words, dtype=np.uint64)
        for k in range(ne):
            if syn[e_ids[e0 + k]]:
                b[k] = 1
                bp[k >> 6] |= np.uint64(1) << np.uint64(k & 63)
        wl = np.empty(nf, dtype=np.int64)
        for k in range(nf):
            wl[k] = w[f_ids[f0 + k]]
        x = np.zeros(nf, dtype=np.uint8)
        tr = trans[t_off[bx] : t_off[bx + 1]].reshape(ne, words)
        bad = apply_trans(tr, bp, ranks[bx], piv[p_off[bx] : p_off[bx + 1]], nf, x)
        if bad >= 0:
            stats[3] = bx
            return False
        nodes, optimal = coset_core(
            x, wl, b,
            vptr[vp_off[bx] : vp_off[bx + 1]], vcon[vc_off[bx] : vc_off[bx + 1]],
            cptr[cp_off[bx] : cp_off[bx + 1]], cvar[cv_off[bx] : cv_off[bx + 1]],
            kptr[kp_off[bx] : kp_off[bx + 1]], kidx[ki_off[bx] : ki_off[bx + 1]],
            budget, exact_threshold,
        )
        stats[2] += nodes
        if optimal:
            stats[1] += 1
        for k in range(nf):
            if x[k]:
                f = f_ids[f0 + k]
                fcg[f] ^= 1
                w[f] = -w[f]
                for j in range(bnd2.shape[1]):
                    e = bnd2[f, j]
                    if e >= 0:
                        syn[e] ^= 1
    return True
