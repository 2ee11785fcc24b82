# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``_pykernels`` for the reference semantics."""
from libc.math cimport ceil, floor, log, sqrt
from libc.stdlib cimport free, malloc, qsort

BACKEND = "cython"


cdef struct Entry:
    double val
    double key
    Py_ssize_t arm


cdef int _cmp_entry(const void *pa, const void *pb) noexcept nogil:
    cdef const Entry *a = <const Entry *>pa
    cdef const Entry *b = <const Entry *>pb
    if a.val > b.val:
        return -1
    if a.val < b.val:
        return 1
    if a.key > b.key:
        return -1
    if a.key < b.key:
        return 1
    if a.arm < b.arm:
        return -1
    if a.arm > b.arm:
        return 1
    return 0


cdef inline Py_ssize_t _sample(const double[:] row, double u) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = row.shape[0] - 1, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if u < row[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline int _eps_greedy(double d, double ue, double ua, double eps) noexcept nogil:
    if ue < eps:
        return 1 if ua < 0.5 else 0
    if d > 0.0:
        return 1
    if d < 0.0:
        return 0
    return 1 if ua < 0.5 else 0


cdef inline double _beta(long long n, double beta_c, double beta_const) noexcept nogil:
    if beta_const >= 0.0:
        return beta_const
    return 1.0 / (ceil(<double>n * log(<double>n) / beta_c) + 1.0)


cdef inline double _cycle_gain(double p, double w, double lam, double xb) noexcept nogil:
    return (-w * (xb - 1.0) * xb / 2.0 - w * ((xb - 1.0) / p + 1.0 / (p * p)) + lam / p) / (xb - 1.0 + 1.0 / p)


cdef void _top_m(Entry *buf, Py_ssize_t n, Py_ssize_t m, long long *chosen) noexcept nogil:
    cdef Py_ssize_t i
    qsort(buf, n, sizeof(Entry), _cmp_entry)
    for i in range(n):
        chosen[i] = 0
    for i in range(m):
        chosen[buf[i].arm] = 1


def simulate_chunk(const double[:, :, :, :] cum, const double[:, :, :] rew, const long long[:] arm_type,
                   const double[:, :] index, long long[:] states, Py_ssize_t m,
                   const double[:, :] uniforms, double[:] out_reward, long long[:] out_budget,
                   long long[:] act_counts):
    cdef Py_ssize_t n = states.shape[0], c, i
    cdef long long t, x, a, budget
    cdef double total
    cdef Entry *buf = <Entry *>malloc(n * sizeof(Entry))
    cdef long long *act = <long long *>malloc(n * sizeof(long long))
    try:
        with nogil:
            for c in range(uniforms.shape[0]):
                for i in range(n):
                    buf[i].val = index[arm_type[i], states[i]]
                    buf[i].key = uniforms[c, i]
                    buf[i].arm = i
                _top_m(buf, n, m, act)
                total = 0.0
                budget = 0
                for i in range(n):
                    t = arm_type[i]
                    x = states[i]
                    a = act[i]
                    total = total + rew[t, x, a]
                    budget = budget + a
                    act_counts[i] += a
                    states[i] = _sample(cum[t, a, x], uniforms[c, n + i])
                out_reward[c] = total
                out_budget[c] = budget
    finally:
        free(buf)
        free(act)


def tabular_chunk(int algo, const double[:, :, :, :] cum, const double[:, :, :] rew,
                  const long long[:] arm_type, const long long[:] table_of_arm, const long long[:] nstates,
                  double[:, :, :] q, long long[:, :, :] visits, long long[:] states, Py_ssize_t m,
                  long long n0, double lam, double eps, double eps_decay, double eps_floor,
                  long long alpha_c, double beta_c, double beta_const,
                  const double[:, :] uniforms, double[:] out_lam, double[:] out_reward,
                  long long[:] out_active, long long[:] out_virtual, double[:] out_eps):
    cdef Py_ssize_t n = states.shape[0], ntab = q.shape[0], c, i, off
    cdef long long tb, t, x, a, y, k, active, virtual
    cdef double total, s, step_size, r, f, best, old, new
    cdef Entry *buf = <Entry *>malloc(n * sizeof(Entry))
    cdef long long *act = <long long *>malloc(n * sizeof(long long))
    cdef long long *vact = <long long *>malloc(n * sizeof(long long))
    cdef long long *nxt = <long long *>malloc(n * sizeof(long long))
    cdef double *qsum = <double *>malloc(ntab * sizeof(double))
    try:
        with nogil:
            for c in range(uniforms.shape[0]):
                if algo == 1:
                    for i in range(n):
                        tb = table_of_arm[i]
                        x = states[i]
                        act[i] = _eps_greedy(q[tb, x, 1] - q[tb, x, 0], uniforms[c, i], uniforms[c, n + i], eps)
                        vact[i] = act[i]
                    off = 2 * n
                else:
                    for i in range(n):
                        tb = table_of_arm[i]
                        x = states[i]
                        if uniforms[c, 0] >= eps:
                            buf[i].val = q[tb, x, 1] - q[tb, x, 0]
                        else:
                            buf[i].val = 0.0
                        buf[i].key = uniforms[c, 1 + i]
                        buf[i].arm = i
                    _top_m(buf, n, m, act)
                    for i in range(n):
                        tb = table_of_arm[i]
                        x = states[i]
                        vact[i] = _eps_greedy(q[tb, x, 1] - q[tb, x, 0], uniforms[c, 1 + n + i],
                                              uniforms[c, 1 + 2 * n + i], eps)
                    off = 1 + 3 * n
                for i in range(n):
                    nxt[i] = _sample(cum[arm_type[i], act[i], states[i]], uniforms[c, off + i])
                for tb in range(ntab):
                    s = 0.0
                    for x in range(nstates[tb]):
                        s = s + (q[tb, x, 0] + q[tb, x, 1])
                    qsum[tb] = s
                total = 0.0
                active = 0
                virtual = 0
                for i in range(n):
                    tb = table_of_arm[i]
                    t = arm_type[i]
                    x = states[i]
                    a = act[i]
                    y = nxt[i]
                    visits[tb, x, a] += 1
                    k = visits[tb, x, a]
                    step_size = 1.0 / <double>((k + alpha_c - 1) // alpha_c)
                    r = rew[t, x, a]
                    f = qsum[tb] / (2.0 * nstates[tb])
                    best = q[tb, y, 0] if q[tb, y, 0] >= q[tb, y, 1] else q[tb, y, 1]
                    old = q[tb, x, a]
                    new = old + step_size * (r + lam * a + best - f - old)
                    q[tb, x, a] = new
                    qsum[tb] += new - old
                    total = total + r
                    active = active + a
                    virtual = virtual + vact[i]
                    states[i] = y
                lam = lam - _beta(n0 + c, beta_c, beta_const) * (virtual - m)
                out_lam[c] = lam
                out_reward[c] = total
                out_active[c] = active
                out_virtual[c] = virtual
                out_eps[c] = eps
                eps = eps * eps_decay
                if eps < eps_floor:
                    eps = eps_floor
    finally:
        free(buf)
        free(act)
        free(vact)
        free(nxt)
        free(qsum)
    return lam, eps


def restart_chunk(const double[:] p, const double[:] w, const long long[:] arm_type, long long[:] ages,
                  Py_ssize_t m, long long n0, double lam, double eps, double beta_c, double beta_const,
                  const double[:, :] uniforms, double[:] out_lam, double[:] out_reward,
                  long long[:] out_active, long long[:] act_counts):
    cdef Py_ssize_t n = ages.shape[0], ntyp = p.shape[0], c, i, t
    cdef double pt, wt, d, xt, fl, c1, c2, g1, g2, y, v, total
    cdef long long x, a, active
    cdef double *thr = <double *>malloc(ntyp * sizeof(double))
    cdef double *gopt = <double *>malloc(ntyp * sizeof(double))
    try:
        with nogil:
            for c in range(uniforms.shape[0]):
                for t in range(ntyp):
                    pt = p[t]
                    wt = w[t]
                    d = (1.0 - pt) - 2.0 * lam * pt / wt
                    if d < 0.0:
                        c1 = 1.0
                        c2 = 1.0
                    else:
                        xt = (sqrt(d) - (1.0 - pt)) / pt
                        fl = floor(xt)
                        c1 = fl if fl > 1.0 else 1.0
                        c2 = fl + 1.0 if fl + 1.0 > 1.0 else 1.0
                    g1 = _cycle_gain(pt, wt, lam, c1)
                    g2 = _cycle_gain(pt, wt, lam, c2)
                    if g2 > g1:
                        thr[t] = c2
                        gopt[t] = g2
                    else:
                        thr[t] = c1
                        gopt[t] = g1
                total = 0.0
                active = 0
                for i in range(n):
                    t = arm_type[i]
                    pt = p[t]
                    wt = w[t]
                    x = ages[i]
                    y = <double>x + 1.0
                    if y < thr[t]:
                        v = gopt[t] * (y - 1.0) + wt * (y - 1.0) * y / 2.0
                    else:
                        v = -(wt / pt) * y + (pt * (lam - gopt[t]) - wt * (1.0 - pt)) / (pt * pt)
                    a = _eps_greedy(lam - pt * v, uniforms[c, i], uniforms[c, n + i], eps)
                    total = total + (-wt * <double>x)
                    active = active + a
                    act_counts[i] += a
                    if a == 1 and uniforms[c, 2 * n + i] < pt:
                        ages[i] = 1
                    else:
                        ages[i] = x + 1
                lam = lam - _beta(n0 + c, beta_c, beta_const) * (active - m)
                out_lam[c] = lam
                out_reward[c] = total
                out_active[c] = active
    finally:
        free(thr)
        free(gopt)
    return lam
