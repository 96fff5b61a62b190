"""Pure-Python router sweep; reference semantics for the compiled kernel.

Both implementations operate on the array bundle built by
:class:`meshsplit.mesh.engine.RouterArrays` and must stay bit-for-bit
equivalent (see tests/test_kernel_equivalence.py).
"""

OUT_NONE = 0
OUT_ROUTER = 1
OUT_EJECT = 2
OUT_BOUNDARY = 3

BODY, HEAD, TAIL, HEADTAIL = 0, 1, 2, 3
LOCAL = 4


def _route(st, r, word):
    dx = (word >> 56) & 0xFF
    dy = (word >> 48) & 0xFF
    if dx == st.chipset_x and dy == 0:
        dx = st.gw_x
        dy = st.gw_y
    cx = st.gx0 + r % st.w
    cy = st.gy0 + r // st.w
    if dx > cx:
        return 2
    if dx < cx:
        return 3
    if dy > cy:
        return 1
    if dy < cy:
        return 0
    return LOCAL


def push(st, r, p, i, data, kind):
    depth = st.depth
    c = int(st.fifo_cnt[r, p, i])
    if c >= depth:
        return False
    slot = (int(st.fifo_head[r, p, i]) + c) % depth
    st.fifo_data[r, p, i, slot] = data
    st.fifo_kind[r, p, i, slot] = kind
    st.fifo_cnt[r, p, i] = c + 1
    st.occ[r, p] += 1
    return True


def step(st, cycle, record):
    R = st.n_routers
    depth = st.depth
    fd, fk, fh, fc = st.fifo_data, st.fifo_kind, st.fifo_head, st.fifo_cnt
    in_route, credits, lock, rr, occ = st.in_route, st.credits, st.lock, st.rr, st.occ
    out_type, out_r, out_i, out_slot = st.out_type, st.out_r, st.out_i, st.out_slot
    up_r, up_o = st.up_r, st.up_o

    moves = []
    want = [-1] * 5
    for r in range(R):
        for p in range(3):
            if occ[r, p] == 0:
                continue
            for i in range(5):
                want[i] = -1
                if fc[r, p, i] > 0:
                    o = int(in_route[r, p, i])
                    if o < 0:
                        o = _route(st, r, int(fd[r, p, i, fh[r, p, i]]))
                    want[i] = o
            for o in range(5):
                t = out_type[r, o]
                if t == OUT_NONE:
                    continue
                if t != OUT_EJECT and credits[r, p, o] <= 0:
                    continue
                lk = int(lock[r, p, o])
                win = -1
                if lk >= 0:
                    if want[lk] == o:
                        win = lk
                else:
                    start = int(rr[r, p, o])
                    for k in range(5):
                        i = (start + k) % 5
                        if want[i] == o and (fk[r, p, i, fh[r, p, i]] & HEAD):
                            win = i
                            break
                if win >= 0:
                    moves.append((r, p, win, o))

    popped = []
    for r, p, i, o in moves:
        hd = int(fh[r, p, i])
        data = int(fd[r, p, i, hd])
        kind = int(fk[r, p, i, hd])
        fh[r, p, i] = (hd + 1) % depth
        fc[r, p, i] -= 1
        occ[r, p] -= 1
        if kind == HEAD:
            lock[r, p, o] = i
            in_route[r, p, i] = o
            rr[r, p, o] = (i + 1) % 5
        elif kind == HEADTAIL:
            rr[r, p, o] = (i + 1) % 5
        elif kind == TAIL:
            lock[r, p, o] = -1
            in_route[r, p, i] = -1
        if out_type[r, o] != OUT_EJECT:
            credits[r, p, o] -= 1
        ur = up_r[r, i]
        if ur >= 0:
            credits[ur, p, up_o[r, i]] += 1
        st.link_flits[r, p, o] += 1
        popped.append((data, kind))

    n_ej = n_bd = n_tr = 0
    for (r, p, i, o), (data, kind) in zip(moves, popped):
        t = out_type[r, o]
        if t == OUT_ROUTER:
            if not push(st, int(out_r[r, o]), p, int(out_i[r, o]), data, kind):
                raise AssertionError("credit discipline violated: downstream FIFO full")
        elif t == OUT_EJECT:
            st.ej_r[n_ej] = r
            st.ej_p[n_ej] = p
            st.ej_data[n_ej] = data
            st.ej_kind[n_ej] = kind
            n_ej += 1
        else:
            st.bd_slot[n_bd] = out_slot[r, o]
            st.bd_p[n_bd] = p
            st.bd_data[n_bd] = data
            st.bd_kind[n_bd] = kind
            n_bd += 1
        if record:
            st.tr_r[n_tr] = r
            st.tr_p[n_tr] = p
            st.tr_o[n_tr] = o
            st.tr_kind[n_tr] = kind
            st.tr_data[n_tr] = data
            n_tr += 1
    return n_ej, n_bd, n_tr
