# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled search backend; a line-by-line port of ``_pysearch.search``."""

from libc.stdlib cimport malloc, calloc, free
from libc.string cimport memset
from cpython.array cimport array

import time

cdef enum:
    LIN_LE = 0
    LIN_EQ = 1
    REIF_EQ = 2

ctypedef long long i64


cdef struct Ctx:
    int n
    int n_cons
    i64 *base
    i64 *off
    i64 *lo
    i64 *hi
    i64 *size
    unsigned char *present
    i64 *kind
    i64 *cs
    i64 *ce
    i64 *rhs
    i64 *coef
    i64 *tvar
    i64 *ws
    i64 *wc
    i64 *stamp
    i64 cur
    i64 *val_trail
    i64 vt_len
    i64 vt_cap
    i64 *var_trail
    i64 st_len
    i64 st_cap
    int *queue
    int q_head
    int q_len
    unsigned char *inq


cdef inline int _grow(i64 **buf, i64 *cap, i64 need) except -1:
    cdef i64 new_cap = cap[0]
    cdef i64 *nb
    cdef i64 i
    if need <= cap[0]:
        return 0
    while new_cap < need:
        new_cap *= 2
    nb = <i64 *> malloc(new_cap * sizeof(i64))
    if nb == NULL:
        raise MemoryError()
    for i in range(cap[0]):
        nb[i] = buf[0][i]
    free(buf[0])
    buf[0] = nb
    cap[0] = new_cap
    return 0


cdef inline int _save(Ctx *c, i64 v) except -1:
    if c.stamp[v] != c.cur:
        _grow(&c.var_trail, &c.st_cap, c.st_len + 4)
        c.var_trail[c.st_len] = v
        c.var_trail[c.st_len + 1] = c.lo[v]
        c.var_trail[c.st_len + 2] = c.hi[v]
        c.var_trail[c.st_len + 3] = c.size[v]
        c.st_len += 4
        c.stamp[v] = c.cur
    return 0


cdef inline int _push_val(Ctx *c, i64 p) except -1:
    if c.vt_len >= c.vt_cap:
        _grow(&c.val_trail, &c.vt_cap, c.vt_len + 1)
    c.val_trail[c.vt_len] = p
    c.vt_len += 1
    return 0


cdef inline void _wake(Ctx *c, i64 v, i64 src):
    cdef i64 j, k
    cdef int pos
    for j in range(c.ws[v], c.ws[v + 1]):
        k = c.wc[j]
        if not c.inq[k] and (k != src or c.kind[k] == LIN_EQ):
            c.inq[k] = 1
            pos = c.q_head + c.q_len
            if pos >= c.n_cons:
                pos -= c.n_cons
            c.queue[pos] = <int> k
            c.q_len += 1


cdef int _set_lo(Ctx *c, i64 v, i64 nl, i64 src) except -1:
    cdef i64 o, val, p
    if nl <= c.lo[v]:
        return 1
    if nl > c.hi[v]:
        return 0
    _save(c, v)
    o = c.off[v] - c.base[v]
    for val in range(c.lo[v], nl):
        p = o + val
        if c.present[p]:
            c.present[p] = 0
            _push_val(c, p)
            c.size[v] -= 1
    p = o + nl
    while not c.present[p]:
        p += 1
    c.lo[v] = p - o
    _wake(c, v, src)
    return 1


cdef int _set_hi(Ctx *c, i64 v, i64 nh, i64 src) except -1:
    cdef i64 o, val, p
    if nh >= c.hi[v]:
        return 1
    if nh < c.lo[v]:
        return 0
    _save(c, v)
    o = c.off[v] - c.base[v]
    for val in range(nh + 1, c.hi[v] + 1):
        p = o + val
        if c.present[p]:
            c.present[p] = 0
            _push_val(c, p)
            c.size[v] -= 1
    p = o + nh
    while not c.present[p]:
        p -= 1
    c.hi[v] = p - o
    _wake(c, v, src)
    return 1


cdef int _remove(Ctx *c, i64 v, i64 val, i64 src) except -1:
    cdef i64 o, p, q
    if val < c.lo[v] or val > c.hi[v]:
        return 1
    o = c.off[v] - c.base[v]
    p = o + val
    if not c.present[p]:
        return 1
    if c.size[v] == 1:
        return 0
    _save(c, v)
    c.present[p] = 0
    _push_val(c, p)
    c.size[v] -= 1
    if val == c.lo[v]:
        q = p + 1
        while not c.present[q]:
            q += 1
        c.lo[v] = q - o
    elif val == c.hi[v]:
        q = p - 1
        while not c.present[q]:
            q -= 1
        c.hi[v] = q - o
    _wake(c, v, src)
    return 1


cdef int _assign(Ctx *c, i64 v, i64 val, i64 src) except -1:
    if val < c.lo[v] or val > c.hi[v] or not c.present[c.off[v] - c.base[v] + val]:
        return 0
    if not _set_lo(c, v, val, src):
        return 0
    return _set_hi(c, v, val, src)


cdef int _linear_le(Ctx *c, i64 k, i64 sign, i64 bound) except -1:
    cdef i64 s = c.cs[k]
    cdef i64 e = c.ce[k]
    cdef i64 i, a, v, minsum = 0, slack
    for i in range(s, e):
        a = sign * c.coef[i]
        v = c.tvar[i]
        if a > 0:
            minsum += a * c.lo[v]
        else:
            minsum += a * c.hi[v]
    slack = bound - minsum
    if slack < 0:
        return 0
    for i in range(s, e):
        a = sign * c.coef[i]
        v = c.tvar[i]
        if a > 0:
            if a * (c.hi[v] - c.lo[v]) > slack:
                if not _set_hi(c, v, c.lo[v] + slack // a, k):
                    return 0
        elif -a * (c.hi[v] - c.lo[v]) > slack:
            if not _set_lo(c, v, c.hi[v] - slack // (-a), k):
                return 0
    return 1


cdef int _propagate(Ctx *c) except -1:
    cdef i64 k, t, b, x, val, i, s, e, v, cand
    cdef int ok, ones, nfree
    while c.q_len > 0:
        k = c.queue[c.q_head]
        c.q_head += 1
        if c.q_head >= c.n_cons:
            c.q_head = 0
        c.q_len -= 1
        c.inq[k] = 0
        t = c.kind[k]
        if t == LIN_LE:
            ok = _linear_le(c, k, 1, c.rhs[k])
        elif t == LIN_EQ:
            ok = _linear_le(c, k, 1, c.rhs[k])
            if ok:
                ok = _linear_le(c, k, -1, -c.rhs[k])
        elif t == REIF_EQ:
            b = c.tvar[c.cs[k]]
            x = c.tvar[c.cs[k] + 1]
            val = c.rhs[k]
            if c.lo[b] == c.hi[b]:
                if c.lo[b] == 1:
                    ok = _assign(c, x, val, k)
                else:
                    ok = _remove(c, x, val, k)
            elif val < c.lo[x] or val > c.hi[x] or not c.present[c.off[x] - c.base[x] + val]:
                ok = _set_hi(c, b, 0, k)
            elif c.lo[x] == c.hi[x]:
                ok = _set_lo(c, b, 1, k)
            else:
                ok = 1
        else:
            ones = 0
            nfree = 0
            cand = -1
            s = c.cs[k]
            e = c.ce[k]
            for i in range(s, e):
                v = c.tvar[i]
                if c.lo[v] == 1:
                    ones += 1
                elif c.hi[v] == 1:
                    nfree += 1
                    cand = v
            if ones > 1:
                ok = 0
            elif ones == 1:
                ok = 1
                if nfree:
                    for i in range(s, e):
                        v = c.tvar[i]
                        if c.lo[v] == 0 and c.hi[v] == 1:
                            _set_hi(c, v, 0, k)
            elif nfree == 0:
                ok = 0
            elif nfree == 1:
                ok = _set_lo(c, cand, 1, k)
            else:
                ok = 1
        if not ok:
            while c.q_len > 0:
                c.inq[c.queue[c.q_head]] = 0
                c.q_head += 1
                if c.q_head >= c.n_cons:
                    c.q_head = 0
                c.q_len -= 1
            c.q_head = 0
            return 0
    return 1


cdef void _undo(Ctx *c, i64 vt, i64 st):
    cdef i64 v
    while c.vt_len > vt:
        c.vt_len -= 1
        c.present[c.val_trail[c.vt_len]] = 1
    while c.st_len > st:
        c.st_len -= 4
        v = c.var_trail[c.st_len]
        c.lo[v] = c.var_trail[c.st_len + 1]
        c.hi[v] = c.var_trail[c.st_len + 2]
        c.size[v] = c.var_trail[c.st_len + 3]


cdef i64 _select(Ctx *c, i64 *decision, i64 nd, i64 *aux, i64 na):
    cdef i64 best = -1, best_size = 0, i, v, sz
    for i in range(nd):
        v = decision[i]
        sz = c.size[v]
        if sz > 1 and (best < 0 or sz < best_size):
            best = v
            best_size = sz
            if sz == 2:
                return v
    if best >= 0:
        return best
    for i in range(na):
        v = aux[i]
        sz = c.size[v]
        if sz > 1 and (best < 0 or sz < best_size):
            best = v
            best_size = sz
            if sz == 2:
                return v
    return best


cdef i64 *_copy(object src, i64 n) except NULL:
    cdef i64 *out = <i64 *> malloc((n if n > 0 else 1) * sizeof(i64))
    cdef const long long[:] view
    cdef i64 i
    if out == NULL:
        raise MemoryError()
    if n > 0:
        view = src
        for i in range(n):
            out[i] = view[i]
    return out


def search(flat, i64 node_cap, bint all_solutions=False, wall_cap=None):
    """Returns ``(status, nodes, solution, max_depth, solutions)``."""
    cdef Ctx c
    cdef i64 n = flat.n_vars
    cdef i64 n_cons = flat.n_cons
    cdef i64 i, v, val, nodes, max_depth, nd = 0, na = 0, sp = 0
    cdef i64 *decision
    cdef i64 *aux
    cdef i64 *st_var
    cdef i64 *st_val
    cdef i64 *st_vt
    cdef i64 *st_st
    cdef unsigned char *st_phase
    cdef int ok
    cdef double started = time.perf_counter()
    cdef bint check_wall = wall_cap is not None
    cdef double wall = float(wall_cap) if check_wall else 0.0
    solutions = []

    memset(&c, 0, sizeof(Ctx))
    c.n = <int> n
    c.n_cons = <int> n_cons
    c.base = _copy(flat.var_lo, n)
    c.off = _copy(flat.var_off, n)
    c.lo = _copy(flat.var_lo, n)
    c.hi = _copy(flat.var_hi, n)
    c.size = <i64 *> malloc((n + 1) * sizeof(i64))
    c.present = <unsigned char *> malloc(flat.n_values + 1)
    c.kind = _copy(flat.c_kind, n_cons)
    c.cs = _copy(flat.c_start, n_cons)
    c.ce = _copy(flat.c_end, n_cons)
    c.rhs = _copy(flat.c_rhs, n_cons)
    c.coef = _copy(flat.t_coef, len(flat.t_coef))
    c.tvar = _copy(flat.t_var, len(flat.t_var))
    c.ws = _copy(flat.w_start, n + 1)
    c.wc = _copy(flat.w_cons, len(flat.w_cons))
    c.stamp = <i64 *> malloc((n + 1) * sizeof(i64))
    c.vt_cap = 1024
    c.val_trail = <i64 *> malloc(c.vt_cap * sizeof(i64))
    c.st_cap = 1024
    c.var_trail = <i64 *> malloc(c.st_cap * sizeof(i64))
    c.queue = <int *> malloc((n_cons + 1) * sizeof(int))
    c.inq = <unsigned char *> calloc(n_cons + 1, 1)
    decision = <i64 *> malloc((n + 1) * sizeof(i64))
    aux = <i64 *> malloc((n + 1) * sizeof(i64))
    st_var = <i64 *> malloc((n + 1) * sizeof(i64))
    st_val = <i64 *> malloc((n + 1) * sizeof(i64))
    st_vt = <i64 *> malloc((n + 1) * sizeof(i64))
    st_st = <i64 *> malloc((n + 1) * sizeof(i64))
    st_phase = <unsigned char *> malloc(n + 1)
    try:
        memset(c.present, 1, flat.n_values + 1)
        for v in range(n):
            c.size[v] = c.hi[v] - c.lo[v] + 1
            c.stamp[v] = -1
            if flat.var_decision[v]:
                decision[nd] = v
                nd += 1
            else:
                aux[na] = v
                na += 1
        c.cur = 0
        nodes = 1
        max_depth = 0
        for i in range(n_cons):
            c.inq[i] = 1
            c.queue[i] = <int> i
        c.q_head = 0
        c.q_len = <int> n_cons
        ok = _propagate(&c)
        if not ok:
            return 1, nodes, None, 0, None
        while True:
            if ok:
                v = _select(&c, decision, nd, aux, na)
                if v < 0:
                    solutions.append(tuple([c.lo[i] for i in range(n)]))
                    if not all_solutions:
                        return 0, nodes, solutions[0], max_depth, None
                    ok = 0
                else:
                    if nodes >= node_cap:
                        return 2, nodes, None, max_depth, None
                    if check_wall and nodes % 1024 == 0 and time.perf_counter() - started > wall:
                        return 2, nodes, None, max_depth, None
                    val = c.lo[v]
                    st_var[sp] = v
                    st_val[sp] = val
                    st_vt[sp] = c.vt_len
                    st_st[sp] = c.st_len
                    st_phase[sp] = 0
                    sp += 1
                    if sp > max_depth:
                        max_depth = sp
                    nodes += 1
                    c.cur = nodes
                    ok = _assign(&c, v, val, -1)
                    if ok:
                        ok = _propagate(&c)
                    continue
            while sp > 0:
                _undo(&c, st_vt[sp - 1], st_st[sp - 1])
                if st_phase[sp - 1] == 0:
                    st_phase[sp - 1] = 1
                    if nodes >= node_cap:
                        return 2, nodes, None, max_depth, None
                    nodes += 1
                    c.cur = nodes
                    ok = _remove(&c, st_var[sp - 1], st_val[sp - 1], -1)
                    if ok:
                        ok = _propagate(&c)
                    if ok:
                        break
                else:
                    sp -= 1
            if sp == 0 and not ok:
                if all_solutions and solutions:
                    return 0, nodes, solutions[0], max_depth, solutions
                return 1, nodes, None, max_depth, (solutions if all_solutions else None)
    finally:
        free(c.base); free(c.off); free(c.lo); free(c.hi); free(c.size); free(c.present)
        free(c.kind); free(c.cs); free(c.ce); free(c.rhs); free(c.coef); free(c.tvar)
        free(c.ws); free(c.wc); free(c.stamp); free(c.val_trail); free(c.var_trail)
        free(c.queue); free(c.inq); free(decision); free(aux)
        free(st_var); free(st_val); free(st_vt); free(st_st); free(st_phase)
