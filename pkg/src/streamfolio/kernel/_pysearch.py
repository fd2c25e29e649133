"""Pure-Python search backend.

Must stay step-for-step identical to ``_csearch.pyx``: same propagation
queue discipline, same branching, same node accounting.
"""
from __future__ import annotations

import time
from collections import deque

from .csp import EXACTLY_ONE, LIN_EQ, LIN_LE, REIF_EQ, FlatCsp

SAT, UNSAT, CAPPED = 0, 1, 2


def search(flat: FlatCsp, node_cap: int, all_solutions: bool = False,
           wall_cap: float | None = None, trace: list | None = None):
    """Returns ``(status, nodes, solution, max_depth, solutions)``."""
    n = flat.n_vars
    base = list(flat.var_lo)
    off = list(flat.var_off)
    lo = list(flat.var_lo)
    hi = list(flat.var_hi)
    size = [h - l + 1 for l, h in zip(lo, hi)]
    present = bytearray(b"\x01") * flat.n_values
    kind = list(flat.c_kind)
    cs = list(flat.c_start)
    ce = list(flat.c_end)
    rhs = list(flat.c_rhs)
    coef = list(flat.t_coef)
    tvar = list(flat.t_var)
    ws = list(flat.w_start)
    wc = list(flat.w_cons)
    n_cons = flat.n_cons
    decision = [v for v in range(n) if flat.var_decision[v]]
    auxiliary = [v for v in range(n) if not flat.var_decision[v]]

    stamp = [-1] * n
    val_trail: list[int] = []
    var_trail: list[int] = []
    queue: deque[int] = deque()
    inq = bytearray(n_cons)
    cur = [0]

    def save(v):
        if stamp[v] != cur[0]:
            var_trail.extend((v, lo[v], hi[v], size[v]))
            stamp[v] = cur[0]

    def wake(v, src):
        for j in range(ws[v], ws[v + 1]):
            k = wc[j]
            if not inq[k] and (k != src or kind[k] == LIN_EQ):
                inq[k] = 1
                queue.append(k)

    def set_lo(v, nl, src):
        if nl <= lo[v]:
            return True
        if nl > hi[v]:
            return False
        save(v)
        o = off[v] - base[v]
        for val in range(lo[v], nl):
            p = o + val
            if present[p]:
                present[p] = 0
                val_trail.append(p)
                size[v] -= 1
        p = o + nl
        while not present[p]:
            p += 1
        lo[v] = p - o
        wake(v, src)
        return True

    def set_hi(v, nh, src):
        if nh >= hi[v]:
            return True
        if nh < lo[v]:
            return False
        save(v)
        o = off[v] - base[v]
        for val in range(nh + 1, hi[v] + 1):
            p = o + val
            if present[p]:
                present[p] = 0
                val_trail.append(p)
                size[v] -= 1
        p = o + nh
        while not present[p]:
            p -= 1
        hi[v] = p - o
        wake(v, src)
        return True

    def remove(v, val, src):
        if val < lo[v] or val > hi[v]:
            return True
        o = off[v] - base[v]
        p = o + val
        if not present[p]:
            return True
        if size[v] == 1:
            return False
        save(v)
        present[p] = 0
        val_trail.append(p)
        size[v] -= 1
        if val == lo[v]:
            q = p + 1
            while not present[q]:
                q += 1
            lo[v] = q - o
        elif val == hi[v]:
            q = p - 1
            while not present[q]:
                q -= 1
            hi[v] = q - o
        wake(v, src)
        return True

    def assign(v, val, src):
        if val < lo[v] or val > hi[v] or not present[off[v] - base[v] + val]:
            return False
        return set_lo(v, val, src) and set_hi(v, val, src)

    def linear_le(k, sign, bound):
        s, e = cs[k], ce[k]
        minsum = 0
        for i in range(s, e):
            a = sign * coef[i]
            v = tvar[i]
            minsum += a * lo[v] if a > 0 else a * hi[v]
        slack = bound - minsum
        if slack < 0:
            return False
        for i in range(s, e):
            a = sign * coef[i]
            v = tvar[i]
            if a > 0:
                if a * (hi[v] - lo[v]) > slack and not set_hi(v, lo[v] + slack // a, k):
                    return False
            elif -a * (hi[v] - lo[v]) > slack and not set_lo(v, hi[v] - slack // -a, k):
                return False
        return True

    def propagate():
        while queue:
            k = queue.popleft()
            inq[k] = 0
            t = kind[k]
            if t == LIN_LE:
                ok = linear_le(k, 1, rhs[k])
            elif t == LIN_EQ:
                ok = linear_le(k, 1, rhs[k]) and linear_le(k, -1, -rhs[k])
            elif t == REIF_EQ:
                b = tvar[cs[k]]
                x = tvar[cs[k] + 1]
                val = rhs[k]
                if lo[b] == hi[b]:
                    if lo[b] == 1:
                        ok = assign(x, val, k)
                    else:
                        ok = remove(x, val, k)
                elif val < lo[x] or val > hi[x] or not present[off[x] - base[x] + val]:
                    ok = set_hi(b, 0, k)
                elif lo[x] == hi[x]:
                    ok = set_lo(b, 1, k)
                else:
                    ok = True
            else:
                ones = 0
                free = 0
                cand = -1
                s, e = cs[k], ce[k]
                for i in range(s, e):
                    v = tvar[i]
                    if lo[v] == 1:
                        ones += 1
                    elif hi[v] == 1:
                        free += 1
                        cand = v
                if ones > 1:
                    ok = False
                elif ones == 1:
                    ok = True
                    if free:
                        for i in range(s, e):
                            v = tvar[i]
                            if lo[v] == 0 and hi[v] == 1:
                                set_hi(v, 0, k)
                elif free == 0:
                    ok = False
                elif free == 1:
                    ok = set_lo(cand, 1, k)
                else:
                    ok = True
            if not ok:
                for q in queue:
                    inq[q] = 0
                queue.clear()
                return False
        return True

    def undo(vt, st):
        while len(val_trail) > vt:
            present[val_trail.pop()] = 1
        while len(var_trail) > st:
            sz = var_trail.pop()
            h = var_trail.pop()
            l = var_trail.pop()
            v = var_trail.pop()
            lo[v] = l
            hi[v] = h
            size[v] = sz

    def select():
        best = -1
        best_size = 0
        for v in decision:
            sz = size[v]
            if sz > 1 and (best < 0 or sz < best_size):
                best = v
                best_size = sz
                if sz == 2:
                    return v
        if best >= 0:
            return best
        for v in auxiliary:
            sz = size[v]
            if sz > 1 and (best < 0 or sz < best_size):
                best = v
                best_size = sz
                if sz == 2:
                    return v
        return best

    started = time.perf_counter()
    nodes = 1
    max_depth = 0
    solutions: list[tuple[int, ...]] = []
    for k in range(n_cons):
        inq[k] = 1
        queue.append(k)
    ok = propagate()
    if trace is not None:
        trace.append((1, 0, -1, 0, "root", ok))
    if not ok:
        return UNSAT, nodes, None, 0, None
    stack: list[list[int]] = []
    while True:
        if ok:
            v = select()
            if v < 0:
                solutions.append(tuple(lo))
                if not all_solutions:
                    return SAT, nodes, solutions[0], max_depth, None
                ok = False
            else:
                if nodes >= node_cap:
                    return CAPPED, nodes, None, max_depth, None
                if wall_cap is not None and nodes % 1024 == 0 and time.perf_counter() - started > wall_cap:
                    return CAPPED, nodes, None, max_depth, None
                val = lo[v]
                stack.append([v, val, len(val_trail), len(var_trail), 0])
                if len(stack) > max_depth:
                    max_depth = len(stack)
                nodes += 1
                cur[0] = nodes
                ok = assign(v, val, -1) and propagate()
                if trace is not None:
                    trace.append((nodes, len(stack), v, val, "=", ok))
                continue
        while stack:
            fr = stack[-1]
            undo(fr[2], fr[3])
            if fr[4] == 0:
                fr[4] = 1
                if nodes >= node_cap:
                    return CAPPED, nodes, None, max_depth, None
                nodes += 1
                cur[0] = nodes
                ok = remove(fr[0], fr[1], -1) and propagate()
                if trace is not None:
                    trace.append((nodes, len(stack), fr[0], fr[1], "!=", ok))
                if ok:
                    break
            else:
                stack.pop()
        else:
            if all_solutions and solutions:
                return SAT, nodes, solutions[0], max_depth, solutions
            return UNSAT, nodes, None, max_depth, (solutions if all_solutions else None)
