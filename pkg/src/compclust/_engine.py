"""Compiled kernels for the matching samplers.

State is primitive: partner arrays pr (red index -> blue index or -1) and pb,
a dense nonnegative weight matrix W (already truncated/thresholded/tempered as
the target requires) and logW holding the *base* log weights used to track
log pi of the current matching.

Proposal kinds: 1 uniform over positive-weight edges, 2 proportional to the
target of the proposed move, 3 Barker ratio r/(1+r), 4 precomputed add/remove
tables. Kinds 2 and 3 keep a full selection-mass table with row sums so a
step costs O(n1+n2); a move touching (a, b) only changes masses in the rows
and columns of the vertices whose partner changed. Acceptance uses the exact
reverse-move selection probability; a double switch has two selections that
produce the same matching in each direction and both are summed.
"""

from __future__ import annotations

import numpy as np
from numba import njit, types
from numba.typed import Dict

KIND_P1, KIND_P2, KIND_P3, KIND_P4 = 1, 2, 3, 4

_MASS_CAP = 1e250


@njit(cache=True)
def _move_ratio(pr, pb, W, a, b):
    """pi(rho∘(a,b)) / pi(rho) from the weight table."""
    jp = pr[a]
    ip = pb[b]
    if jp == b:
        return 1.0 / W[a, b]
    if jp < 0 and ip < 0:
        return W[a, b]
    if jp >= 0 and ip < 0:
        return W[a, b] / W[a, jp]
    if jp < 0 and ip >= 0:
        return W[a, b] / W[ip, b]
    return (W[a, b] * W[ip, jp]) / (W[a, jp] * W[ip, b])


@njit(cache=True)
def _mass(kind, pr, pb, W, q_add, q_rem, a, b):
    """Unnormalized selection mass of edge (a, b) under the current matching."""
    if kind == 1:
        return 1.0 if W[a, b] > 0.0 else 0.0
    if kind == 4:
        if pr[a] == b:
            return q_rem[a, b]
        return q_add[a, b]
    r = _move_ratio(pr, pb, W, a, b)
    if kind == 2:
        return r if r < _MASS_CAP else _MASS_CAP
    if r > _MASS_CAP:
        return 1.0
    return r / (1.0 + r)


@njit(cache=True)
def _build_table(kind, pr, pb, W, q_add, q_rem, R, rowsum):
    n1, n2 = W.shape
    tot = 0.0
    for a in range(n1):
        s = 0.0
        for b in range(n2):
            m = _mass(kind, pr, pb, W, q_add, q_rem, a, b)
            R[a, b] = m
            s += m
        rowsum[a] = s
        tot += s
    return tot


@njit(cache=True)
def _init_tables(kind, pr, pb, W, q_add, q_rem, R, rowsum, rs4, adrow, totbox):
    if kind == 2 or kind == 3:
        totbox[0] = _build_table(kind, pr, pb, W, q_add, q_rem, R, rowsum)
    elif kind == 4:
        n1, n2 = W.shape
        tot = 0.0
        for a in range(n1):
            s = 0.0
            for b in range(n2):
                s += q_add[a, b]
            adrow[a] = s
            if pr[a] >= 0:
                s += q_rem[a, pr[a]] - q_add[a, pr[a]]
            rs4[a] = s
            tot += s
        totbox[0] = tot


@njit(cache=True)
def _logpi_of(pr, logW):
    s = 0.0
    for a in range(pr.shape[0]):
        if pr[a] >= 0:
            s += logW[a, pr[a]]
    return s


@njit(cache=True)
def _encode(pr, n2):
    code = 0
    base = np.int64(n2 + 1)
    for a in range(pr.shape[0]):
        code = code * base + np.int64(pr[a] + 1)
    return code


@njit(cache=True)
def _build_p4(W):
    """Add/remove selection tables of proposal kind 4, clamped at zero."""
    n1, n2 = W.shape
    rowsum = np.zeros(n1)
    colsum = np.zeros(n2)
    for i in range(n1):
        for j in range(n2):
            rowsum[i] += W[i, j]
            colsum[j] += W[i, j]
    q_add = np.zeros((n1, n2))
    q_rem = np.zeros((n1, n2))
    f1 = np.zeros((n1, n2))
    f2 = np.zeros((n1, n2))
    tmp = np.zeros(max(n1, n2))
    for i in range(n1):
        s1 = 0.0
        for j in range(n2):
            d = (W[i, j] - np.sqrt(W[i, j])) / (1.0 + colsum[j] - W[i, j] + rowsum[i])
            tmp[j] = d
            s1 += d
        for j in range(n2):
            f1[i, j] = 1.0 - (s1 - tmp[j])
    for j in range(n2):
        s2 = 0.0
        for i in range(n1):
            d = (W[i, j] - np.sqrt(W[i, j])) / (1.0 + rowsum[i] - W[i, j] + colsum[j])
            tmp[i] = d
            s2 += d
        for i in range(n1):
            f2[i, j] = 1.0 - (s2 - tmp[i])
    for i in range(n1):
        for j in range(n2):
            if W[i, j] > 0.0:
                qa = np.sqrt(W[i, j]) * f1[i, j] * f2[i, j]
                q_add[i, j] = qa if qa > 0.0 else 0.0
                q_rem[i, j] = 1.0 / np.sqrt(W[i, j])
    return q_add, q_rem


@njit(cache=True)
def _mh_step(kind, pr, pb, W, logW, q_add, q_rem, R, rowsum, totbox,
             rs4, adrow, sup_a, sup_b, nsup, logpibox,
             srow_a, srow_ip, scol_b, scol_jp):
    """One MH step; mutates state in place on acceptance.

    Returns (accepted, mkind, a, b, ip, jp) with mkind: -1 hold, 0 addition,
    1 deletion, 2 switch releasing a's partner, 3 switch releasing b's
    partner, 4 double switch.
    """
    n1, n2 = W.shape
    # ---- draw the proposal edge ----
    if kind == 1:
        if nsup == 0:
            return 0, -1, -1, -1, -1, -1
        idx = np.random.randint(0, nsup)
        a = sup_a[idx]
        b = sup_b[idx]
        Z = float(nsup)
        mf = 1.0
    elif kind == 4:
        Z = totbox[0]
        if Z <= 0.0:
            return 0, -1, -1, -1, -1, -1
        u = np.random.random() * Z
        a = -1
        acc = 0.0
        for i in range(n1):
            if u < acc + rs4[i]:
                a = i
                break
            acc += rs4[i]
        if a < 0:
            for i in range(n1 - 1, -1, -1):
                if rs4[i] > 0.0:
                    a = i
                    break
            if a < 0:
                return 0, -1, -1, -1, -1, -1
        u -= acc
        pa = pr[a]
        b = -1
        acc2 = 0.0
        for j in range(n2):
            mj = q_rem[a, j] if pa == j else q_add[a, j]
            if u < acc2 + mj:
                b = j
                break
            acc2 += mj
        if b < 0:
            for j in range(n2 - 1, -1, -1):
                mj = q_rem[a, j] if pa == j else q_add[a, j]
                if mj > 0.0:
                    b = j
                    break
            if b < 0:
                return 0, -1, -1, -1, -1, -1
        mf = q_rem[a, b] if pa == b else q_add[a, b]
    else:
        Z = totbox[0]
        if Z <= 0.0:
            return 0, -1, -1, -1, -1, -1
        u = np.random.random() * Z
        a = -1
        acc = 0.0
        for i in range(n1):
            if u < acc + rowsum[i]:
                a = i
                break
            acc += rowsum[i]
        if a < 0:
            for i in range(n1 - 1, -1, -1):
                if rowsum[i] > 0.0:
                    a = i
                    break
            if a < 0:
                return 0, -1, -1, -1, -1, -1
        u -= acc
        b = -1
        acc2 = 0.0
        for j in range(n2):
            if u < acc2 + R[a, j]:
                b = j
                break
            acc2 += R[a, j]
        if b < 0:
            for j in range(n2 - 1, -1, -1):
                if R[a, j] > 0.0:
                    b = j
                    break
            if b < 0:
                return 0, -1, -1, -1, -1, -1
        mf = R[a, b]

    # ---- classify and compute the target ratio ----
    jp = pr[a]
    ip = pb[b]
    if jp == b:
        mkind = 1
        ratio = 1.0 / W[a, b]
    elif jp < 0 and ip < 0:
        mkind = 0
        ratio = W[a, b]
    elif jp >= 0 and ip < 0:
        mkind = 2
        ratio = W[a, b] / W[a, jp]
    elif jp < 0 and ip >= 0:
        mkind = 3
        ratio = W[a, b] / W[ip, b]
    else:
        mkind = 4
        ratio = (W[a, b] * W[ip, jp]) / (W[a, jp] * W[ip, b])
        # the same double switch is produced by selecting (ip, jp)
        mf += _mass(kind, pr, pb, W, q_add, q_rem, ip, jp)
    if not ratio > 0.0:
        return 0, mkind, a, b, ip, jp

    row_ip = mkind == 3 or mkind == 4
    col_jp = mkind == 2 or mkind == 4

    # ---- tentative move ----
    if mkind == 0:
        pr[a] = b
        pb[b] = a
    elif mkind == 1:
        pr[a] = -1
        pb[b] = -1
    elif mkind == 2:
        pr[a] = b
        pb[b] = a
        pb[jp] = -1
    elif mkind == 3:
        pr[a] = b
        pb[b] = a
        pr[ip] = -1
    else:
        pr[a] = b
        pb[b] = a
        pr[ip] = jp
        pb[jp] = ip

    # ---- reverse-mass and updated normalization ----
    s_new_a = 0.0
    s_new_ip = 0.0
    rs_a_new = 0.0
    rs_ip_new = 0.0
    if kind == 1:
        Z_new = Z
        if mkind == 4:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, jp) + _mass(
                kind, pr, pb, W, q_add, q_rem, ip, b
            )
        elif mkind == 2:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, jp)
        elif mkind == 3:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, ip, b)
        else:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, b)
    elif kind == 4:
        dz = 0.0
        pa_new = pr[a]
        rs_a_new = adrow[a]
        if pa_new >= 0:
            rs_a_new += q_rem[a, pa_new] - q_add[a, pa_new]
        dz += rs_a_new - rs4[a]
        if row_ip:
            p_ip_new = pr[ip]
            rs_ip_new = adrow[ip]
            if p_ip_new >= 0:
                rs_ip_new += q_rem[ip, p_ip_new] - q_add[ip, p_ip_new]
            dz += rs_ip_new - rs4[ip]
        Z_new = Z + dz
        if mkind == 4:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, jp) + _mass(
                kind, pr, pb, W, q_add, q_rem, ip, b
            )
        elif mkind == 2:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, jp)
        elif mkind == 3:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, ip, b)
        else:
            mr = _mass(kind, pr, pb, W, q_add, q_rem, a, b)
    else:
        dz = 0.0
        for j in range(n2):
            m = _mass(kind, pr, pb, W, q_add, q_rem, a, j)
            srow_a[j] = m
            s_new_a += m
        dz += s_new_a - rowsum[a]
        if row_ip:
            for j in range(n2):
                m = _mass(kind, pr, pb, W, q_add, q_rem, ip, j)
                srow_ip[j] = m
                s_new_ip += m
            dz += s_new_ip - rowsum[ip]
        for i2 in range(n1):
            if i2 == a:
                scol_b[i2] = srow_a[b]
                continue
            if row_ip and i2 == ip:
                scol_b[i2] = srow_ip[b]
                continue
            m = _mass(kind, pr, pb, W, q_add, q_rem, i2, b)
            scol_b[i2] = m
            dz += m - R[i2, b]
        if col_jp:
            for i2 in range(n1):
                if i2 == a:
                    scol_jp[i2] = srow_a[jp]
                    continue
                if row_ip and i2 == ip:
                    scol_jp[i2] = srow_ip[jp]
                    continue
                m = _mass(kind, pr, pb, W, q_add, q_rem, i2, jp)
                scol_jp[i2] = m
                dz += m - R[i2, jp]
        Z_new = Z + dz
        if mkind == 4:
            mr = srow_a[jp] + srow_ip[b]
        elif mkind == 2:
            mr = srow_a[jp]
        elif mkind == 3:
            mr = srow_ip[b]
        else:
            mr = srow_a[b]

    # ---- accept / reject ----
    alpha = 0.0
    if Z_new > 0.0 and mf > 0.0:
        alpha = ratio * (mr / Z_new) * (Z / mf)
    if np.random.random() < alpha:
        if kind == 2 or kind == 3:
            for j in range(n2):
                R[a, j] = srow_a[j]
            rowsum[a] = s_new_a
            if row_ip:
                for j in range(n2):
                    R[ip, j] = srow_ip[j]
                rowsum[ip] = s_new_ip
            for i2 in range(n1):
                skip = i2 == a or (row_ip and i2 == ip)
                if not skip:
                    rowsum[i2] += scol_b[i2] - R[i2, b]
                R[i2, b] = scol_b[i2]
            if col_jp:
                for i2 in range(n1):
                    skip = i2 == a or (row_ip and i2 == ip)
                    if not skip:
                        rowsum[i2] += scol_jp[i2] - R[i2, jp]
                    R[i2, jp] = scol_jp[i2]
            totbox[0] = Z_new
        elif kind == 4:
            rs4[a] = rs_a_new
            if row_ip:
                rs4[ip] = rs_ip_new
            totbox[0] = Z_new
        # base log-posterior bookkeeping
        if mkind == 0:
            logpibox[0] += logW[a, b]
        elif mkind == 1:
            logpibox[0] -= logW[a, b]
        elif mkind == 2:
            logpibox[0] += logW[a, b] - logW[a, jp]
        elif mkind == 3:
            logpibox[0] += logW[a, b] - logW[ip, b]
        else:
            logpibox[0] += logW[a, b] + logW[ip, jp] - logW[a, jp] - logW[ip, b]
        return 1, mkind, a, b, ip, jp

    # reject: restore partners
    if mkind == 0:
        pr[a] = -1
        pb[b] = -1
    elif mkind == 1:
        pr[a] = b
        pb[b] = a
    elif mkind == 2:
        pr[a] = jp
        pb[jp] = a
        pb[b] = -1
    elif mkind == 3:
        pr[ip] = b
        pb[b] = ip
        pr[a] = -1
    else:
        pr[a] = jp
        pb[jp] = a
        pr[ip] = b
        pb[b] = ip
    return 0, mkind, a, b, ip, jp


@njit(cache=True)
def _build_support(W):
    n1, n2 = W.shape
    nsup = 0
    for a in range(n1):
        for b in range(n2):
            if W[a, b] > 0.0:
                nsup += 1
    sup_a = np.empty(nsup, np.int64)
    sup_b = np.empty(nsup, np.int64)
    c = 0
    for a in range(n1):
        for b in range(n2):
            if W[a, b] > 0.0:
                sup_a[c] = a
                sup_b[c] = b
                c += 1
    return sup_a, sup_b, nsup


@njit(cache=True)
def _edge_diff(pr, ref_pr):
    d = 0
    for a in range(pr.shape[0]):
        if pr[a] != ref_pr[a]:
            if pr[a] >= 0:
                d += 1
            if ref_pr[a] >= 0:
                d += 1
    return d


@njit(cache=True)
def run_chain2(seed, n_steps, kind, W, logW, q_add, q_rem, pr, pb,
               thin, ref_pr, record_visits, collect_occ, refresh_every):
    """Run the two-color chain for n_steps.

    Returns (n_accepted, visits, occ, trace, logpi) where visits counts the
    state after every step keyed by the encoded partner vector, occ holds the
    fraction of steps each edge was present (when collect_occ), and trace has
    one row [n_edges, logpi, diff_from_ref] every `thin` steps.
    """
    np.random.seed(seed)
    n1, n2 = W.shape
    R = np.zeros((n1, n2))
    rowsum = np.zeros(n1)
    rs4 = np.zeros(n1)
    adrow = np.zeros(n1)
    totbox = np.zeros(1)
    _init_tables(kind, pr, pb, W, q_add, q_rem, R, rowsum, rs4, adrow, totbox)
    sup_a, sup_b, nsup = _build_support(W)
    logpibox = np.zeros(1)
    logpibox[0] = _logpi_of(pr, logW)
    srow_a = np.zeros(n2)
    srow_ip = np.zeros(n2)
    scol_b = np.zeros(n1)
    scol_jp = np.zeros(n1)

    occ = np.zeros((n1, n2))
    t_add = np.zeros((n1, n2), dtype=np.int64)
    visits = Dict.empty(key_type=types.int64, value_type=types.int64)
    n_rec = n_steps // thin if thin > 0 else 0
    trace = np.zeros((n_rec, 3))
    n_acc = 0
    use_ref = ref_pr.shape[0] == n1

    for t in range(n_steps):
        acc, mkind, a, b, ip, jp = _mh_step(
            kind, pr, pb, W, logW, q_add, q_rem, R, rowsum, totbox,
            rs4, adrow, sup_a, sup_b, nsup, logpibox,
            srow_a, srow_ip, scol_b, scol_jp,
        )
        n_acc += acc
        if acc == 1 and collect_occ:
            if mkind == 0:
                t_add[a, b] = t
            elif mkind == 1:
                occ[a, b] += t - t_add[a, b]
            elif mkind == 2:
                occ[a, jp] += t - t_add[a, jp]
                t_add[a, b] = t
            elif mkind == 3:
                occ[ip, b] += t - t_add[ip, b]
                t_add[a, b] = t
            else:
                occ[a, jp] += t - t_add[a, jp]
                occ[ip, b] += t - t_add[ip, b]
                t_add[a, b] = t
                t_add[ip, jp] = t
        if record_visits:
            code = _encode(pr, n2)
            if code in visits:
                visits[code] += 1
            else:
                visits[code] = 1
        if thin > 0 and (t + 1) % thin == 0:
            row = (t + 1) // thin - 1
            ne = 0
            for i2 in range(n1):
                if pr[i2] >= 0:
                    ne += 1
            trace[row, 0] = ne
            trace[row, 1] = logpibox[0]
            trace[row, 2] = _edge_diff(pr, ref_pr) if use_ref else 0.0
        if refresh_every > 0 and (t + 1) % refresh_every == 0:
            _init_tables(kind, pr, pb, W, q_add, q_rem, R, rowsum, rs4, adrow, totbox)
            logpibox[0] = _logpi_of(pr, logW)
    if collect_occ:
        for a2 in range(n1):
            if pr[a2] >= 0:
                occ[a2, pr[a2]] += n_steps - t_add[a2, pr[a2]]
        for a2 in range(n1):
            for b2 in range(n2):
                occ[a2, b2] /= n_steps
    return n_acc, visits, occ, trace, logpibox[0]


@njit(cache=True)
def run_tempered2(seed, n_steps, kind, Wst, logW, qa_st, qr_st, pr, pb,
                  betas, eta, rung0, p_rung, adapt_until, adapt_c0, adapt_t0,
                  thin, record_visits, mode_pr, refresh_every):
    """Simulated-tempering run over a ladder of flattened targets.

    Wst/qa_st/qr_st hold per-rung weight and kind-4 tables, betas the
    decreasing inverse temperatures (betas[0] = 1) and eta the log
    pseudo-priors, adapted by stochastic approximation while t < adapt_until.
    Visits are recorded only while the chain sits at rung 0. Returns
    (n_acc_moves, visits, rung_occupancy, mode_hit_step, trace, eta).
    """
    np.random.seed(seed)
    n_rungs = betas.shape[0]
    n1, n2 = logW.shape
    R = np.zeros((n1, n2))
    rowsum = np.zeros(n1)
    rs4 = np.zeros(n1)
    adrow = np.zeros(n1)
    totbox = np.zeros(1)
    srow_a = np.zeros(n2)
    srow_ip = np.zeros(n2)
    scol_b = np.zeros(n1)
    scol_jp = np.zeros(n1)
    rung = rung0
    _init_tables(kind, pr, pb, Wst[rung], qa_st[rung], qr_st[rung], R, rowsum, rs4, adrow, totbox)
    sup_a, sup_b, nsup = _build_support(Wst[0])
    logpibox = np.zeros(1)
    logpibox[0] = _logpi_of(pr, logW)

    visits = Dict.empty(key_type=types.int64, value_type=types.int64)
    rung_occ = np.zeros(n_rungs, dtype=np.int64)
    n_rec = n_steps // thin if thin > 0 else 0
    trace = np.zeros((n_rec, 3))
    use_mode = mode_pr.shape[0] == n1
    mode_hit = np.int64(-1)
    n_acc = 0

    for t in range(n_steps):
        if np.random.random() < p_rung:
            prop = rung + 1 if np.random.random() < 0.5 else rung - 1
            if 0 <= prop < n_rungs:
                la = (betas[prop] - betas[rung]) * logpibox[0] + eta[prop] - eta[rung]
                if np.log(np.random.random()) < la:
                    rung = prop
                    _init_tables(kind, pr, pb, Wst[rung], qa_st[rung], qr_st[rung],
                                 R, rowsum, rs4, adrow, totbox)
        else:
            acc, mkind, a, b, ip, jp = _mh_step(
                kind, pr, pb, Wst[rung], logW, qa_st[rung], qr_st[rung],
                R, rowsum, totbox, rs4, adrow, sup_a, sup_b, nsup, logpibox,
                srow_a, srow_ip, scol_b, scol_jp,
            )
            n_acc += acc
        if t < adapt_until:
            eta[rung] -= adapt_c0 / (1.0 + t / adapt_t0)
        rung_occ[rung] += 1
        if record_visits and rung == 0:
            code = _encode(pr, n2)
            if code in visits:
                visits[code] += 1
            else:
                visits[code] = 1
        if use_mode and mode_hit < 0:
            same = True
            for i2 in range(n1):
                if pr[i2] != mode_pr[i2]:
                    same = False
                    break
            if same:
                mode_hit = t
        if thin > 0 and (t + 1) % thin == 0:
            row = (t + 1) // thin - 1
            ne = 0
            for i2 in range(n1):
                if pr[i2] >= 0:
                    ne += 1
            trace[row, 0] = rung
            trace[row, 1] = logpibox[0]
            trace[row, 2] = ne
        if refresh_every > 0 and (t + 1) % refresh_every == 0:
            _init_tables(kind, pr, pb, Wst[rung], qa_st[rung], qr_st[rung],
                         R, rowsum, rs4, adrow, totbox)
            logpibox[0] = _logpi_of(pr, logW)
    return n_acc, visits, rung_occ, mode_hit, trace, eta


@njit(cache=True)
def _g_bilinear(gv, gx0, gy0, gdx, gdy, x, y):
    ny, nx = gv.shape
    fx = (x - gx0) / gdx
    fy = (y - gy0) / gdy
    if fx < 0.0 or fx > nx - 1 or fy < 0.0 or fy > ny - 1:
        return 0.0
    ix = int(fx)
    iy = int(fy)
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    tx = fx - ix
    ty = fy - iy
    v = (
        gv[iy, ix] * (1 - tx) * (1 - ty)
        + gv[iy, ix + 1] * tx * (1 - ty)
        + gv[iy + 1, ix] * (1 - tx) * ty
        + gv[iy + 1, ix + 1] * tx * ty
    )
    return v if v > 0.0 else 0.0


_FORCED_MERGE_W = 1e30


@njit(cache=True)
def _project2d(xy, marks, k, cl, Amask, sigma, p, lam, csz,
               gv, gx0, gy0, gdx, gdy, r_max, kind, delta):
    """Fragment the clusters along the color split and build the pair table.

    Fragments appear in first-occurrence (= minimal member index) order.
    Returns (fcl, red_frag, blue_frag, fx, fy, fd, fmin, pr, pb, W2, logW2).
    """
    n = xy.shape[0]
    fcl = np.empty(n, np.int64)
    frag_cluster = np.empty(n, np.int64)
    frag_side = np.empty(n, np.int64)
    nf = 0
    for i in range(n):
        side = 1 if Amask[marks[i] - 1] else 0
        c = cl[i]
        f = -1
        for ff in range(nf):
            if frag_cluster[ff] == c and frag_side[ff] == side:
                f = ff
                break
        if f < 0:
            f = nf
            frag_cluster[f] = c
            frag_side[f] = side
            nf += 1
        fcl[i] = f

    fx = np.zeros(nf)
    fy = np.zeros(nf)
    fd = np.zeros(nf, np.int64)
    fmin = np.full(nf, n, np.int64)
    for i in range(n):
        f = fcl[i]
        fx[f] += xy[i, 0]
        fy[f] += xy[i, 1]
        fd[f] += 1
        if i < fmin[f]:
            fmin[f] = i
    for f in range(nf):
        fx[f] /= fd[f]
        fy[f] /= fd[f]

    red_of = np.full(nf, -1, np.int64)
    blue_of = np.full(nf, -1, np.int64)
    n1 = 0
    n2 = 0
    for f in range(nf):
        if frag_side[f] == 1:
            red_of[f] = n1
            n1 += 1
        else:
            blue_of[f] = n2
            n2 += 1
    red_frag = np.empty(n1, np.int64)
    blue_frag = np.empty(n2, np.int64)
    for f in range(nf):
        if frag_side[f] == 1:
            red_frag[red_of[f]] = f
        else:
            blue_frag[blue_of[f]] = f

    pr = np.full(n1, -1, np.int64)
    pb = np.full(n2, -1, np.int64)
    for fa in range(nf):
        if frag_side[fa] == 1:
            for fb in range(nf):
                if frag_side[fb] == 0 and frag_cluster[fb] == frag_cluster[fa]:
                    pr[red_of[fa]] = blue_of[fb]
                    pb[blue_of[fb]] = red_of[fa]
                    break

    # multiplicity-weighted pair table
    W2 = np.zeros((n1, n2))
    logW2 = np.full((n1, n2), -np.inf)
    gr = np.empty(n1)
    gb = np.empty(n2)
    for ii in range(n1):
        f = red_frag[ii]
        gr[ii] = _g_bilinear(gv, gx0, gy0, gdx, gdy, fx[f], fy[f])
    for jj in range(n2):
        f = blue_frag[jj]
        gb[jj] = _g_bilinear(gv, gx0, gy0, gdx, gdy, fx[f], fy[f])
    for ii in range(n1):
        fi = red_frag[ii]
        di = fd[fi]
        for jj in range(n2):
            fj = blue_frag[jj]
            dj = fd[fj]
            d = di + dj
            if d > k or p[d - 1] <= 0.0:
                continue
            ddx = fx[fi] - fx[fj]
            ddy = fy[fi] - fy[fj]
            dist2 = ddx * ddx + ddy * ddy
            if r_max > 0.0 and dist2 >= r_max * r_max:
                continue
            xm = (di * fx[fi] + dj * fx[fj]) / d
            ym = (di * fy[fi] + dj * fy[fj]) / d
            gm = _g_bilinear(gv, gx0, gy0, gdx, gdy, xm, ym)
            if gm <= 0.0:
                continue
            if gr[ii] <= 0.0 or gb[jj] <= 0.0 or p[di - 1] <= 0.0 or p[dj - 1] <= 0.0:
                # a standalone fragment carries zero prior mass: force the merge
                w = _FORCED_MERGE_W
            else:
                w = (
                    p[d - 1] * csz[di - 1] * csz[dj - 1]
                    / (lam * p[di - 1] * p[dj - 1] * csz[d - 1])
                    * gm / (gr[ii] * gb[jj])
                    / (sigma * sigma)
                    * np.exp(-np.pi * di * dj * dist2 / (2.0 * sigma * sigma * d))
                )
                if w > _FORCED_MERGE_W:
                    w = _FORCED_MERGE_W
            if kind == 1 and w <= delta:
                continue
            W2[ii, jj] = w
            logW2[ii, jj] = np.log(w)
    return fcl, red_frag, blue_frag, fx, fy, fd, fmin, pr, pb, W2, logW2


@njit(cache=True)
def _projection_apply(xy, marks, k, cl, Amask, sigma, p, lam, csz,
                      gv, gx0, gy0, gdx, gdy, r_max, n_moves, kind, delta):
    """One Gibbs-projection kernel application P^(A); mutates cl in place.

    Splits every cluster into its A-side and complement-side fragments,
    matches fragments of a common cluster, runs n_moves two-color MH moves on
    the multiplicity-weighted table and lifts the result back. Returns the
    number of accepted inner moves.
    """
    n = xy.shape[0]
    fcl, red_frag, blue_frag, fx, fy, fd, fmin, pr, pb, W2, logW2 = _project2d(
        xy, marks, k, cl, Amask, sigma, p, lam, csz,
        gv, gx0, gy0, gdx, gdy, r_max, kind, delta)
    n1 = red_frag.shape[0]
    n2 = blue_frag.shape[0]
    nf = fx.shape[0]
    if n1 == 0 or n2 == 0:
        return 0

    R = np.zeros((n1, n2))
    rowsum = np.zeros(n1)
    rs4 = np.zeros(n1)
    adrow = np.zeros(n1)
    totbox = np.zeros(1)
    if kind == 4:
        q_add, q_rem = _build_p4(W2)
    else:
        q_add = np.zeros((1, 1))
        q_rem = np.zeros((1, 1))
    _init_tables(kind, pr, pb, W2, q_add, q_rem, R, rowsum, rs4, adrow, totbox)
    sup_a, sup_b, nsup = _build_support(W2)
    logpibox = np.zeros(1)
    logpibox[0] = _logpi_of(pr, logW2)
    srow_a = np.zeros(n2)
    srow_ip = np.zeros(n2)
    scol_b = np.zeros(n1)
    scol_jp = np.zeros(n1)
    n_acc = 0
    for _ in range(n_moves):
        acc, mkind, a, b, ip, jp = _mh_step(
            kind, pr, pb, W2, logW2, q_add, q_rem, R, rowsum, totbox,
            rs4, adrow, sup_a, sup_b, nsup, logpibox,
            srow_a, srow_ip, scol_b, scol_jp,
        )
        n_acc += acc

    # lift: matched fragments share the smaller leader label
    leader = np.empty(nf, np.int64)
    for f in range(nf):
        leader[f] = fmin[f]
    for ii in range(n1):
        jj = pr[ii]
        if jj >= 0:
            fa = red_frag[ii]
            fb = blue_frag[jj]
            m = fmin[fa] if fmin[fa] < fmin[fb] else fmin[fb]
            leader[fa] = m
            leader[fb] = m
    for i in range(n):
        cl[i] = leader[fcl[i]]
    return n_acc


@njit(cache=True)
def projection_apply_seeded(seed, xy, marks, k, cl, Amask, sigma, p, lam, csz,
                            gv, gx0, gy0, gdx, gdy, r_max, n_moves, kind, delta):
    """Seeded single kernel application, for sweep drivers."""
    np.random.seed(seed)
    return _projection_apply(xy, marks, k, cl, Amask, sigma, p, lam, csz,
                             gv, gx0, gy0, gdx, gdy, r_max, n_moves, kind, delta)


@njit(cache=True)
def _rgs_code(cl, scratch):
    n = cl.shape[0]
    for i in range(n):
        scratch[i] = -1
    code = np.int64(0)
    nxt = np.int64(0)
    for i in range(n):
        lab = cl[i]
        if scratch[lab] < 0:
            scratch[lab] = nxt
            nxt += 1
        code = code * n + scratch[lab]
    return code


@njit(cache=True)
def run_projection_chain(seed, n_apps, n_moves, kind, xy, marks, k, cl,
                         sigma, p, lam, csz, gv, gx0, gy0, gdx, gdy,
                         r_max, delta, record_visits):
    """Repeatedly apply the uniform mixture of projection kernels.

    Each application draws a uniform color subset of size floor(k/2) and runs
    the corresponding kernel. Visits count the partition (as a
    restricted-growth code) after every application.
    """
    np.random.seed(seed)
    n = xy.shape[0]
    half = k // 2
    Amask = np.zeros(k, np.bool_)
    perm = np.empty(k, np.int64)
    scratch = np.empty(n, np.int64)
    visits = Dict.empty(key_type=types.int64, value_type=types.int64)
    n_acc = 0
    for _ in range(n_apps):
        for c in range(k):
            perm[c] = c
        for c in range(half):
            r = c + np.random.randint(0, k - c)
            tmp = perm[c]
            perm[c] = perm[r]
            perm[r] = tmp
        for c in range(k):
            Amask[c] = False
        for c in range(half):
            Amask[perm[c]] = True
        n_acc += _projection_apply(
            xy, marks, k, cl, Amask, sigma, p, lam, csz,
            gv, gx0, gy0, gdx, gdy, r_max, n_moves, kind, delta,
        )
        if record_visits:
            code = _rgs_code(cl, scratch)
            if code in visits:
                visits[code] += 1
            else:
                visits[code] = 1
    return n_acc, visits
