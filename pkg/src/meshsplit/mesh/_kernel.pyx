# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled router sweep. Mirrors _kernel_py.py statement for statement."""
from libc.stdint cimport uint64_t, uint8_t, int8_t, int32_t, int64_t

cdef enum:
    OUT_NONE = 0
    OUT_ROUTER = 1
    OUT_EJECT = 2
    OUT_BOUNDARY = 3
    HEAD = 1
    TAIL = 2
    HEADTAIL = 3
    LOCAL = 4


cdef inline int _route(int cx, int cy, uint64_t word, int chipset_x, int gw_x, int gw_y) nogil:
    cdef int dx = <int>((word >> 56) & 0xFF)
    cdef int dy = <int>((word >> 48) & 0xFF)
    if dx == chipset_x and dy == 0:
        dx = gw_x
        dy = gw_y
    if dx > cx:
        return 2
    if dx < cx:
        return 3
    if dy > cy:
        return 1
    if dy < cy:
        return 0
    return LOCAL


def push(object st, int r, int p, int i, uint64_t data, int kind):
    cdef _Ctx cx = _ctx(st)
    cdef int32_t[:, :, ::1] fc = cx.fc
    cdef int32_t[:, :, ::1] fh = cx.fh
    cdef uint64_t[:, :, :, ::1] fd = cx.fd
    cdef uint8_t[:, :, :, ::1] fk = cx.fk
    cdef int32_t[:, ::1] occ = cx.occ
    cdef int depth = cx.depth
    cdef int c = fc[r, p, i]
    if c >= depth:
        return False
    cdef int slot = (fh[r, p, i] + c) % depth
    fd[r, p, i, slot] = data
    fk[r, p, i, slot] = <uint8_t>kind
    fc[r, p, i] = c + 1
    occ[r, p] += 1
    return True


cdef class _Ctx:
    """Typed views of one RouterArrays, acquired once."""
    cdef uint64_t[:, :, :, ::1] fd
    cdef uint8_t[:, :, :, ::1] fk
    cdef int32_t[:, :, ::1] fh
    cdef int32_t[:, :, ::1] fc
    cdef int8_t[:, :, ::1] in_route
    cdef int32_t[:, :, ::1] credits
    cdef int8_t[:, :, ::1] lock
    cdef int8_t[:, :, ::1] rr
    cdef int32_t[:, ::1] occ
    cdef int8_t[:, ::1] out_type
    cdef int32_t[:, ::1] out_r
    cdef int8_t[:, ::1] out_i
    cdef int32_t[:, ::1] out_slot
    cdef int32_t[:, ::1] up_r
    cdef int8_t[:, ::1] up_o
    cdef int64_t[:, :, ::1] link_flits
    cdef int32_t[::1] mv_r
    cdef int8_t[::1] mv_p
    cdef int8_t[::1] mv_i
    cdef int8_t[::1] mv_o
    cdef uint64_t[::1] mv_data
    cdef uint8_t[::1] mv_kind
    cdef int32_t[::1] ej_r
    cdef int8_t[::1] ej_p
    cdef uint64_t[::1] ej_data
    cdef uint8_t[::1] ej_kind
    cdef int32_t[::1] bd_slot
    cdef int8_t[::1] bd_p
    cdef uint64_t[::1] bd_data
    cdef uint8_t[::1] bd_kind
    cdef int32_t[::1] tr_r
    cdef int8_t[::1] tr_p
    cdef int8_t[::1] tr_o
    cdef uint8_t[::1] tr_kind
    cdef uint64_t[::1] tr_data
    cdef int R
    cdef int depth
    cdef int w
    cdef int gx0
    cdef int gy0
    cdef int chipset_x
    cdef int gw_x
    cdef int gw_y

    def __init__(self, object st):
        self.fd = st.fifo_data
        self.fk = st.fifo_kind
        self.fh = st.fifo_head
        self.fc = st.fifo_cnt
        self.in_route = st.in_route
        self.credits = st.credits
        self.lock = st.lock
        self.rr = st.rr
        self.occ = st.occ
        self.out_type = st.out_type
        self.out_r = st.out_r
        self.out_i = st.out_i
        self.out_slot = st.out_slot
        self.up_r = st.up_r
        self.up_o = st.up_o
        self.link_flits = st.link_flits
        self.mv_r = st.mv_r
        self.mv_p = st.mv_p
        self.mv_i = st.mv_i
        self.mv_o = st.mv_o
        self.mv_data = st.mv_data
        self.mv_kind = st.mv_kind
        self.ej_r = st.ej_r
        self.ej_p = st.ej_p
        self.ej_data = st.ej_data
        self.ej_kind = st.ej_kind
        self.bd_slot = st.bd_slot
        self.bd_p = st.bd_p
        self.bd_data = st.bd_data
        self.bd_kind = st.bd_kind
        self.tr_r = st.tr_r
        self.tr_p = st.tr_p
        self.tr_o = st.tr_o
        self.tr_kind = st.tr_kind
        self.tr_data = st.tr_data
        self.R = st.n_routers
        self.depth = st.depth
        self.w = st.w
        self.gx0 = st.gx0
        self.gy0 = st.gy0
        self.chipset_x = st.chipset_x
        self.gw_x = st.gw_x
        self.gw_y = st.gw_y


cdef _Ctx _ctx(object st):
    cdef _Ctx c = st.kernel_ctx
    if c is None:
        c = _Ctx(st)
        st.kernel_ctx = c
    return c

def step(object st, long cycle, bint record):
    cdef _Ctx cx = _ctx(st)
    cdef uint64_t[:, :, :, ::1] fd = cx.fd
    cdef uint8_t[:, :, :, ::1] fk = cx.fk
    cdef int32_t[:, :, ::1] fh = cx.fh
    cdef int32_t[:, :, ::1] fc = cx.fc
    cdef int8_t[:, :, ::1] in_route = cx.in_route
    cdef int32_t[:, :, ::1] credits = cx.credits
    cdef int8_t[:, :, ::1] lock = cx.lock
    cdef int8_t[:, :, ::1] rr = cx.rr
    cdef int32_t[:, ::1] occ = cx.occ
    cdef int8_t[:, ::1] out_type = cx.out_type
    cdef int32_t[:, ::1] out_r = cx.out_r
    cdef int8_t[:, ::1] out_i = cx.out_i
    cdef int32_t[:, ::1] out_slot = cx.out_slot
    cdef int32_t[:, ::1] up_r = cx.up_r
    cdef int8_t[:, ::1] up_o = cx.up_o
    cdef int64_t[:, :, ::1] link_flits = cx.link_flits
    cdef int32_t[::1] mv_r = cx.mv_r
    cdef int8_t[::1] mv_p = cx.mv_p
    cdef int8_t[::1] mv_i = cx.mv_i
    cdef int8_t[::1] mv_o = cx.mv_o
    cdef uint64_t[::1] mv_data = cx.mv_data
    cdef uint8_t[::1] mv_kind = cx.mv_kind
    cdef int32_t[::1] ej_r = cx.ej_r
    cdef int8_t[::1] ej_p = cx.ej_p
    cdef uint64_t[::1] ej_data = cx.ej_data
    cdef uint8_t[::1] ej_kind = cx.ej_kind
    cdef int32_t[::1] bd_slot = cx.bd_slot
    cdef int8_t[::1] bd_p = cx.bd_p
    cdef uint64_t[::1] bd_data = cx.bd_data
    cdef uint8_t[::1] bd_kind = cx.bd_kind
    cdef int32_t[::1] tr_r = cx.tr_r
    cdef int8_t[::1] tr_p = cx.tr_p
    cdef int8_t[::1] tr_o = cx.tr_o
    cdef uint8_t[::1] tr_kind = cx.tr_kind
    cdef uint64_t[::1] tr_data = cx.tr_data
    cdef int R = cx.R
    cdef int depth = cx.depth
    cdef int w = cx.w
    cdef int gx0 = cx.gx0
    cdef int gy0 = cx.gy0
    cdef int chipset_x = cx.chipset_x
    cdef int gw_x = cx.gw_x
    cdef int gw_y = cx.gw_y

    cdef int r, p, i, o, k, t, lk, win, start, hd, ur, slot, c, r2, i2
    cdef int want[5]
    cdef int n_mv = 0
    cdef int n_ej = 0
    cdef int n_bd = 0
    cdef int n_tr = 0
    cdef uint64_t data
    cdef uint8_t kind

    with nogil:
        for r in range(R):
            for p in range(3):
                if occ[r, p] == 0:
                    continue
                for i in range(5):
                    want[i] = -1
                    if fc[r, p, i] > 0:
                        o = in_route[r, p, i]
                        if o < 0:
                            o = _route(gx0 + r % w, gy0 + r // w, fd[r, p, i, fh[r, p, i]],
                                       chipset_x, gw_x, gw_y)
                        want[i] = o
                for o in range(5):
                    t = out_type[r, o]
                    if t == OUT_NONE:
                        continue
                    if t != OUT_EJECT and credits[r, p, o] <= 0:
                        continue
                    lk = lock[r, p, o]
                    win = -1
                    if lk >= 0:
                        if want[lk] == o:
                            win = lk
                    else:
                        start = rr[r, p, o]
                        for k in range(5):
                            i = (start + k) % 5
                            if want[i] == o and (fk[r, p, i, fh[r, p, i]] & HEAD):
                                win = i
                                break
                    if win >= 0:
                        mv_r[n_mv] = r
                        mv_p[n_mv] = <int8_t>p
                        mv_i[n_mv] = <int8_t>win
                        mv_o[n_mv] = <int8_t>o
                        n_mv += 1

        for k in range(n_mv):
            r = mv_r[k]
            p = mv_p[k]
            i = mv_i[k]
            o = mv_o[k]
            hd = fh[r, p, i]
            data = fd[r, p, i, hd]
            kind = fk[r, p, i, hd]
            fh[r, p, i] = (hd + 1) % depth
            fc[r, p, i] -= 1
            occ[r, p] -= 1
            if kind == HEAD:
                lock[r, p, o] = <int8_t>i
                in_route[r, p, i] = <int8_t>o
                rr[r, p, o] = <int8_t>((i + 1) % 5)
            elif kind == HEADTAIL:
                rr[r, p, o] = <int8_t>((i + 1) % 5)
            elif kind == TAIL:
                lock[r, p, o] = -1
                in_route[r, p, i] = -1
            if out_type[r, o] != OUT_EJECT:
                credits[r, p, o] -= 1
            ur = up_r[r, i]
            if ur >= 0:
                credits[ur, p, up_o[r, i]] += 1
            link_flits[r, p, o] += 1
            mv_data[k] = data
            mv_kind[k] = kind

        for k in range(n_mv):
            r = mv_r[k]
            p = mv_p[k]
            o = mv_o[k]
            data = mv_data[k]
            kind = mv_kind[k]
            t = out_type[r, o]
            if t == OUT_ROUTER:
                r2 = out_r[r, o]
                i2 = out_i[r, o]
                c = fc[r2, p, i2]
                # credit discipline guarantees room
                slot = (fh[r2, p, i2] + c) % depth
                fd[r2, p, i2, slot] = data
                fk[r2, p, i2, slot] = kind
                fc[r2, p, i2] = c + 1
                occ[r2, p] += 1
            elif t == OUT_EJECT:
                ej_r[n_ej] = r
                ej_p[n_ej] = <int8_t>p
                ej_data[n_ej] = data
                ej_kind[n_ej] = kind
                n_ej += 1
            else:
                bd_slot[n_bd] = out_slot[r, o]
                bd_p[n_bd] = <int8_t>p
                bd_data[n_bd] = data
                bd_kind[n_bd] = kind
                n_bd += 1
            if record:
                tr_r[n_tr] = r
                tr_p[n_tr] = <int8_t>p
                tr_o[n_tr] = <int8_t>o
                tr_kind[n_tr] = kind
                tr_data[n_tr] = data
                n_tr += 1
    return n_ej, n_bd, n_tr
