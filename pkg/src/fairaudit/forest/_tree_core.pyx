# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree kernels.  Semantics match ``_tree_core_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, realloc
from libc.string cimport memset, memcpy
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t
from libcpp.algorithm cimport sort as cpp_sort

cnp.import_array()

cdef double GAIN_TOL = 1e-12


cdef inline uint64_t splitmix_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double side_score(double a, double b) noexcept nogil:
    return (a * a + b * b) / (a + b)


cdef struct Tree:
    int32_t* feature
    double* threshold
    int32_t* left
    int32_t* right
    int32_t* cat_off
    int32_t* n_pos
    int32_t* n_neg
    uint8_t* members
    int64_t members_len
    int64_t members_cap
    int64_t n_nodes


cdef int grow_members(Tree* t, int64_t extra) noexcept nogil:
    cdef int64_t cap = t.members_cap
    cdef uint8_t* p
    if t.members_len + extra <= cap:
        return 0
    while cap < t.members_len + extra:
        cap = cap * 2 + 64
    p = <uint8_t*>realloc(t.members, cap)
    if p == NULL:
        return -1
    t.members = p
    t.members_cap = cap
    return 0


cdef inline bint prefer_membership(uint8_t* new, uint8_t* old, int L) noexcept nogil:
    cdef int c
    for c in range(L):
        if new[c] != old[c]:
            return new[c] != 0
    return False


cdef int grow(const int32_t[:, ::1] ranks, const double[::1] uniq, const int64_t[::1] uniq_off,
              const uint8_t[::1] is_cat, const int32_t[::1] n_levels, const uint8_t[::1] y,
              int64_t* idx, int64_t n_boot, double w_pos, double w_neg,
              int mtry, int min_leaf, int max_depth, uint64_t seed, Tree* t) noexcept nogil:
    cdef int n_feat = ranks.shape[1]
    cdef int max_lv = 1
    cdef int f, i, j, jj, k, L, tmp, best_f, npres, min_code, prev, code
    cdef int64_t s, e, m, npos, nneg, cp, cn, nl, row, best_rank, lo_r, hi_r, nleft, a_i
    cdef int64_t sp, node, depth, lid
    cdef double tot_a, tot_b, parent, best, score, lo, hi, thr, best_thr
    cdef double ka, kb, kv
    cdef uint64_t state = seed
    cdef bint has_min

    for f in range(n_feat):
        if is_cat[f] and n_levels[f] > max_lv:
            max_lv = n_levels[f]

    cdef int64_t max_nodes = 2 * n_boot + 1
    cdef int64_t* stack = <int64_t*>malloc(4 * (max_nodes + 1) * sizeof(int64_t))
    cdef int* perm = <int*>malloc(n_feat * sizeof(int))
    cdef uint64_t* keys = <uint64_t*>malloc((n_boot + 1) * sizeof(uint64_t))
    cdef int64_t* tmp_idx = <int64_t*>malloc((n_boot + 1) * sizeof(int64_t))
    cdef int64_t* pos_c = <int64_t*>malloc(max_lv * sizeof(int64_t))
    cdef int64_t* neg_c = <int64_t*>malloc(max_lv * sizeof(int64_t))
    cdef int* present = <int*>malloc(max_lv * sizeof(int))
    cdef int* order = <int*>malloc(max_lv * sizeof(int))
    cdef double* key = <double*>malloc(max_lv * sizeof(double))
    cdef uint8_t* cand = <uint8_t*>malloc(max_lv)
    cdef uint8_t* best_memb = <uint8_t*>malloc(max_lv)
    cdef int best_L = 0
    cdef int status = 0
    if (stack == NULL or perm == NULL or keys == NULL or tmp_idx == NULL or pos_c == NULL
            or neg_c == NULL or present == NULL or order == NULL or key == NULL
            or cand == NULL or best_memb == NULL):
        status = -1

    t.n_nodes = 1
    t.feature[0] = -1
    t.threshold[0] = 0.0
    t.left[0] = -1
    t.right[0] = -1
    t.cat_off[0] = -1
    sp = 0
    if status == 0:
        stack[0] = 0
        stack[1] = 0
        stack[2] = n_boot
        stack[3] = 0
        sp = 1

    while sp > 0:
        sp -= 1
        node = stack[4 * sp]
        s = stack[4 * sp + 1]
        e = stack[4 * sp + 2]
        depth = stack[4 * sp + 3]
        m = e - s
        npos = 0
        for i in range(s, e):
            npos += y[idx[i]]
        nneg = m - npos
        t.n_pos[node] = <int32_t>npos
        t.n_neg[node] = <int32_t>nneg
        if npos == 0 or nneg == 0 or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        tot_a = <double>npos * w_pos
        tot_b = <double>nneg * w_neg
        parent = side_score(tot_a, tot_b)

        for i in range(n_feat):
            perm[i] = i
        for i in range(mtry):
            j = i + <int>(splitmix_next(&state) % <uint64_t>(n_feat - i))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp

        best = -1.0 / 0.0
        best_f = -1
        best_thr = 0.0
        best_rank = 0
        for k in range(mtry):
            f = perm[k]
            if is_cat[f]:
                L = n_levels[f]
                memset(pos_c, 0, L * sizeof(int64_t))
                memset(neg_c, 0, L * sizeof(int64_t))
                for i in range(s, e):
                    row = idx[i]
                    code = ranks[row, f]
                    if y[row]:
                        pos_c[code] += 1
                    else:
                        neg_c[code] += 1
                npres = 0
                for code in range(L):
                    if pos_c[code] + neg_c[code] > 0:
                        present[npres] = code
                        ka = <double>pos_c[code] * w_pos
                        kb = <double>neg_c[code] * w_neg
                        key[npres] = (ka - kb) / (ka + kb)
                        order[npres] = npres
                        npres += 1
                if npres < 2:
                    continue
                # insertion sort of positions by (key, code); codes ascend with position
                for i in range(1, npres):
                    tmp = order[i]
                    kv = key[tmp]
                    j = i - 1
                    while j >= 0 and (key[order[j]] > kv or (key[order[j]] == kv and order[j] > tmp)):
                        order[j + 1] = order[j]
                        j -= 1
                    order[j + 1] = tmp
                min_code = present[0]
                cp = 0
                cn = 0
                for jj in range(1, npres):
                    prev = order[jj - 1]
                    cp += pos_c[present[prev]]
                    cn += neg_c[present[prev]]
                    if key[order[jj]] == key[prev]:
                        continue
                    if cp + cn < min_leaf or m - cp - cn < min_leaf:
                        continue
                    score = (side_score(<double>cp * w_pos, <double>cn * w_neg)
                             + side_score(<double>(npos - cp) * w_pos, <double>(nneg - cn) * w_neg))
                    if score > best or (score == best and best_f == f):
                        memset(cand, 0, L)
                        has_min = False
                        for i in range(jj):
                            if present[order[i]] == min_code:
                                has_min = True
                        if has_min:
                            for i in range(jj):
                                cand[present[order[i]]] = 1
                        else:
                            for i in range(jj, npres):
                                cand[present[order[i]]] = 1
                        if score > best or prefer_membership(cand, best_memb, L):
                            best = score
                            best_f = f
                            memcpy(best_memb, cand, L)
                            best_L = L
            else:
                for i in range(s, e):
                    row = idx[i]
                    keys[i - s] = ((<uint64_t>ranks[row, f]) << 1) | y[row]
                cpp_sort(keys, keys + m)
                if (keys[0] >> 1) == (keys[m - 1] >> 1):
                    continue
                cp = 0
                for i in range(m - 1):
                    cp += <int64_t>(keys[i] & 1)
                    lo_r = <int64_t>(keys[i] >> 1)
                    hi_r = <int64_t>(keys[i + 1] >> 1)
                    if lo_r == hi_r:
                        continue
                    nl = i + 1
                    if nl < min_leaf or m - nl < min_leaf:
                        continue
                    cn = nl - cp
                    score = (side_score(<double>cp * w_pos, <double>cn * w_neg)
                             + side_score(<double>(npos - cp) * w_pos, <double>(nneg - cn) * w_neg))
                    if score > best:
                        best = score
                        best_f = f
                        best_rank = lo_r
                        lo = uniq[uniq_off[f] + lo_r]
                        hi = uniq[uniq_off[f] + hi_r]
                        thr = lo + (hi - lo) * 0.5
                        best_thr = lo if thr >= hi else thr
        if best_f < 0 or not (best - parent > GAIN_TOL * (tot_a + tot_b)):
            continue

        # stable partition of idx[s:e]
        nleft = 0
        if is_cat[best_f]:
            if grow_members(t, best_L) != 0:
                status = -1
                break
            t.cat_off[node] = <int32_t>t.members_len
            memcpy(t.members + t.members_len, best_memb, best_L)
            t.members_len += best_L
            for i in range(s, e):
                if best_memb[ranks[idx[i], best_f]]:
                    tmp_idx[nleft] = idx[i]
                    nleft += 1
            a_i = nleft
            for i in range(s, e):
                if not best_memb[ranks[idx[i], best_f]]:
                    tmp_idx[a_i] = idx[i]
                    a_i += 1
        else:
            t.threshold[node] = best_thr
            for i in range(s, e):
                if ranks[idx[i], best_f] <= best_rank:
                    tmp_idx[nleft] = idx[i]
                    nleft += 1
            a_i = nleft
            for i in range(s, e):
                if ranks[idx[i], best_f] > best_rank:
                    tmp_idx[a_i] = idx[i]
                    a_i += 1
        memcpy(idx + s, tmp_idx, m * sizeof(int64_t))
        t.feature[node] = best_f
        lid = t.n_nodes
        for i in range(2):
            t.feature[lid + i] = -1
            t.threshold[lid + i] = 0.0
            t.left[lid + i] = -1
            t.right[lid + i] = -1
            t.cat_off[lid + i] = -1
            t.n_pos[lid + i] = 0
            t.n_neg[lid + i] = 0
        t.n_nodes += 2
        t.left[node] = <int32_t>lid
        t.right[node] = <int32_t>(lid + 1)
        stack[4 * sp] = lid + 1
        stack[4 * sp + 1] = s + nleft
        stack[4 * sp + 2] = e
        stack[4 * sp + 3] = depth + 1
        sp += 1
        stack[4 * sp] = lid
        stack[4 * sp + 1] = s
        stack[4 * sp + 2] = s + nleft
        stack[4 * sp + 3] = depth + 1
        sp += 1

    free(stack)
    free(perm)
    free(keys)
    free(tmp_idx)
    free(pos_c)
    free(neg_c)
    free(present)
    free(order)
    free(key)
    free(cand)
    free(best_memb)
    return status


def build_tree(ranks, uniq, uniq_off, is_cat, n_levels, y, boot, double w_pos, double w_neg,
               int mtry, int min_leaf, int max_depth, seed):
    cdef const int32_t[:, ::1] r = np.ascontiguousarray(ranks, dtype=np.int32)
    cdef const double[::1] u = np.ascontiguousarray(uniq, dtype=np.float64)
    cdef const int64_t[::1] uo = np.ascontiguousarray(uniq_off, dtype=np.int64)
    cdef const uint8_t[::1] ic = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef const int32_t[::1] nl = np.ascontiguousarray(n_levels, dtype=np.int32)
    cdef const uint8_t[::1] yy = np.ascontiguousarray(y, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx_arr = np.array(boot, dtype=np.int64)
    cdef int64_t n_boot = idx_arr.shape[0]
    cdef int64_t cap = 2 * n_boot + 1
    cdef uint64_t sd = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if n_boot < 1:
        raise ValueError("empty bootstrap sample")
    feature = np.empty(cap, dtype=np.int32)
    threshold = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    cat_off = np.empty(cap, dtype=np.int32)
    n_pos = np.empty(cap, dtype=np.int32)
    n_neg = np.empty(cap, dtype=np.int32)
    cdef int32_t[::1] fv = feature
    cdef double[::1] tv = threshold
    cdef int32_t[::1] lv = left
    cdef int32_t[::1] rv = right
    cdef int32_t[::1] cv = cat_off
    cdef int32_t[::1] pv = n_pos
    cdef int32_t[::1] nv = n_neg
    cdef Tree t
    t.feature = &fv[0]
    t.threshold = &tv[0]
    t.left = &lv[0]
    t.right = &rv[0]
    t.cat_off = &cv[0]
    t.n_pos = &pv[0]
    t.n_neg = &nv[0]
    t.members = NULL
    t.members_len = 0
    t.members_cap = 0
    t.n_nodes = 0
    cdef int64_t* ip = <int64_t*>idx_arr.data
    cdef int status
    with nogil:
        status = grow(r, u, uo, ic, nl, yy, ip, n_boot, w_pos, w_neg, mtry, min_leaf, max_depth, sd, &t)
    if status != 0:
        free(t.members)
        raise MemoryError("tree growth ran out of memory")
    cdef int64_t nn = t.n_nodes
    members = np.empty(t.members_len, dtype=np.uint8)
    cdef uint8_t[::1] mv = members
    if t.members_len:
        memcpy(&mv[0], t.members, t.members_len)
    free(t.members)
    return {
        "feature": feature[:nn].copy(),
        "threshold": threshold[:nn].copy(),
        "left": left[:nn].copy(),
        "right": right[:nn].copy(),
        "cat_offset": cat_off[:nn].copy(),
        "n_pos": n_pos[:nn].copy(),
        "n_neg": n_neg[:nn].copy(),
        "members": members,
    }


def tree_votes(X, is_cat, n_levels, feature, threshold, left, right, cat_offset,
               n_pos, n_neg, members, roots, double w_pos, double w_neg, bint tie_positive):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const uint8_t[::1] ic = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef const int32_t[::1] nl = np.ascontiguousarray(n_levels, dtype=np.int32)
    cdef const int32_t[::1] fe = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const int32_t[::1] le = np.ascontiguousarray(left, dtype=np.int32)
    cdef const int32_t[::1] ri = np.ascontiguousarray(right, dtype=np.int32)
    cdef const int32_t[::1] co = np.ascontiguousarray(cat_offset, dtype=np.int32)
    cdef const int32_t[::1] npv = np.ascontiguousarray(n_pos, dtype=np.int32)
    cdef const int32_t[::1] nnv = np.ascontiguousarray(n_neg, dtype=np.int32)
    cdef const uint8_t[::1] mem = np.ascontiguousarray(members, dtype=np.uint8)
    cdef const int64_t[::1] rt = np.ascontiguousarray(roots, dtype=np.int64)
    cdef int64_t n = x.shape[0]
    cdef int64_t n_trees = rt.shape[0]
    out = np.zeros((n, n_trees), dtype=np.uint8)
    cdef uint8_t[:, ::1] ov = out
    cdef int64_t i, tr, node, code
    cdef int f
    cdef double v, a, b
    cdef bint go_left
    with nogil:
        for i in range(n):
            for tr in range(n_trees):
                node = rt[tr]
                while fe[node] >= 0:
                    f = fe[node]
                    v = x[i, f]
                    if ic[f]:
                        code = <int64_t>v
                        go_left = code >= 0 and code < nl[f] and mem[co[node] + code] != 0
                    else:
                        go_left = v <= th[node]
                    node = le[node] if go_left else ri[node]
                a = <double>npv[node] * w_pos
                b = <double>nnv[node] * w_neg
                ov[i, tr] = 1 if (a > b or (a == b and tie_positive)) else 0
    return out
