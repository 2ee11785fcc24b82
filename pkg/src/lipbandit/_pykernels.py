"""Pure-Python versions of the inner loops.

Each function mirrors its counterpart in ``_ckernels.pyx`` operation by
operation and consumes the same pre-drawn uniforms, so both backends give
bit-identical results. Arrays passed in are updated in place.
"""
import math

BACKEND = "python"


def _sample(row, u):
    # smallest y with u < cum[y]; the last entry of every row is exactly 1.0
    lo, hi = 0, len(row) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < row[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _top_m(vals, keys, m):
    n = len(vals)
    order = sorted(range(n), key=lambda i: (-vals[i], -keys[i], i))
    chosen = [0] * n
    for i in order[:m]:
        chosen[i] = 1
    return chosen


def simulate_chunk(cum, rew, arm_type, index, states, m, uniforms, out_reward, out_budget, act_counts):
    n = states.shape[0]
    for c in range(uniforms.shape[0]):
        u = uniforms[c]
        vals = [index[arm_type[i], states[i]] for i in range(n)]
        keys = [u[i] for i in range(n)]
        act = _top_m(vals, keys, m)
        total = 0.0
        budget = 0
        for i in range(n):
            t = arm_type[i]
            x = states[i]
            a = act[i]
            total += rew[t, x, a]
            budget += a
            act_counts[i] += a
            states[i] = _sample(cum[t, a, x], u[n + i])
        out_reward[c] = total
        out_budget[c] = budget


def _eps_greedy(d, ue, ua, eps):
    if ue < eps:
        return 1 if ua < 0.5 else 0
    if d > 0.0:
        return 1
    if d < 0.0:
        return 0
    return 1 if ua < 0.5 else 0


def _beta(n, beta_c, beta_const):
    if beta_const >= 0.0:
        return beta_const
    return 1.0 / (math.ceil(n * math.log(n) / beta_c) + 1.0)


def tabular_chunk(algo, cum, rew, arm_type, table_of_arm, nstates, q, visits, states, m,
                  n0, lam, eps, eps_decay, eps_floor, alpha_c, beta_c, beta_const,
                  uniforms, out_lam, out_reward, out_active, out_virtual, out_eps):
    n = states.shape[0]
    ntab = q.shape[0]
    act = [0] * n
    vact = [0] * n
    nxt = [0] * n
    for c in range(uniforms.shape[0]):
        step = n0 + c
        u = uniforms[c]
        if algo == 1:
            for i in range(n):
                tb = table_of_arm[i]
                x = states[i]
                act[i] = _eps_greedy(q[tb, x, 1] - q[tb, x, 0], u[i], u[n + i], eps)
                vact[i] = act[i]
            off = 2 * n
        else:
            vals = []
            for i in range(n):
                tb = table_of_arm[i]
                x = states[i]
                vals.append(q[tb, x, 1] - q[tb, x, 0] if u[0] >= eps else 0.0)
            keys = [u[1 + i] for i in range(n)]
            chosen = _top_m(vals, keys, m)
            for i in range(n):
                act[i] = chosen[i]
                tb = table_of_arm[i]
                x = states[i]
                vact[i] = _eps_greedy(q[tb, x, 1] - q[tb, x, 0], u[1 + n + i], u[1 + 2 * n + i], eps)
            off = 1 + 3 * n
        for i in range(n):
            nxt[i] = _sample(cum[arm_type[i], act[i], states[i]], u[off + i])
        qsum = [0.0] * ntab
        for tb in range(ntab):
            s = 0.0
            for x in range(nstates[tb]):
                s += q[tb, x, 0] + q[tb, x, 1]
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
            step_size = 1.0 / ((k + alpha_c - 1) // alpha_c)
            r = rew[t, x, a]
            f = qsum[tb] / (2.0 * nstates[tb])
            best = q[tb, y, 0] if q[tb, y, 0] >= q[tb, y, 1] else q[tb, y, 1]
            old = q[tb, x, a]
            new = old + step_size * (r + lam * a + best - f - old)
            q[tb, x, a] = new
            qsum[tb] += new - old
            total += r
            active += a
            virtual += vact[i]
            states[i] = y
        lam = lam - _beta(step, beta_c, beta_const) * (virtual - m)
        out_lam[c] = lam
        out_reward[c] = total
        out_active[c] = active
        out_virtual[c] = virtual
        out_eps[c] = eps
        eps = eps * eps_decay
        if eps < eps_floor:
            eps = eps_floor
    return lam, eps


def restart_chunk(p, w, arm_type, ages, m, n0, lam, eps, beta_c, beta_const,
                  uniforms, out_lam, out_reward, out_active, act_counts):
    n = ages.shape[0]
    ntyp = p.shape[0]
    thr = [0.0] * ntyp
    gopt = [0.0] * ntyp
    act = [0] * n
    for c in range(uniforms.shape[0]):
        step = n0 + c
        u = uniforms[c]
        for t in range(ntyp):
            pt, wt = p[t], w[t]
            d = (1.0 - pt) - 2.0 * lam * pt / wt
            if d < 0.0:
                c1 = 1.0
                c2 = 1.0
            else:
                xt = (math.sqrt(d) - (1.0 - pt)) / pt
                fl = math.floor(xt)
                c1 = fl if fl > 1.0 else 1.0
                c2 = fl + 1.0 if fl + 1.0 > 1.0 else 1.0
            g1 = _cycle_gain(pt, wt, lam, c1)
            g2 = _cycle_gain(pt, wt, lam, c2)
            if g2 > g1:
                thr[t], gopt[t] = c2, g2
            else:
                thr[t], gopt[t] = c1, g1
        total = 0.0
        active = 0
        for i in range(n):
            t = arm_type[i]
            pt, wt = p[t], w[t]
            x = ages[i]
            y = x + 1.0
            if y < thr[t]:
                v = gopt[t] * (y - 1.0) + wt * (y - 1.0) * y / 2.0
            else:
                v = -(wt / pt) * y + (pt * (lam - gopt[t]) - wt * (1.0 - pt)) / (pt * pt)
            a = _eps_greedy(lam - pt * v, u[i], u[n + i], eps)
            act[i] = a
            total += -wt * x
            active += a
            act_counts[i] += a
            if a == 1 and u[2 * n + i] < pt:
                ages[i] = 1
            else:
                ages[i] = x + 1
        lam = lam - _beta(step, beta_c, beta_const) * (active - m)
        out_lam[c] = lam
        out_reward[c] = total
        out_active[c] = active
    return lam


def _cycle_gain(p, w, lam, xb):
    return (-w * (xb - 1.0) * xb / 2.0 - w * ((xb - 1.0) / p + 1.0 / (p * p)) + lam / p) / (xb - 1.0 + 1.0 / p)
