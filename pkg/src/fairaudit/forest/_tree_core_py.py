"""Pure-Python/numpy tree kernels.

Reference implementation of the compiled ``_tree_core`` module.  Both produce
identical trees and votes for identical inputs: split scores are computed from
integer class counts with the same IEEE operations, and node-level feature
sampling uses the same SplitMix64 stream.

Inputs shared by both kernels:

ranks      int32 (n, p): numeric columns hold the rank of the value among the
           sorted distinct training values; categorical columns hold level codes
uniq       float64 flat array of sorted distinct values per numeric column
uniq_off   int64 (p,) offset of each column into ``uniq``
is_cat     uint8 (p,)
n_levels   int32 (p,) distinct values (numeric) or levels (categorical)
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAIN_TOL = 1e-12


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, m: int) -> int:
        return self.next() % m


def _side_score(a, b):
    return (a * a + b * b) / (a + b)


def _prefer_membership(new, old) -> bool:
    # canonical tie-break between equal-score categorical partitions
    diff = np.flatnonzero(new != old)
    return bool(diff.size) and bool(new[diff[0]])


def build_tree(ranks, uniq, uniq_off, is_cat, n_levels, y, boot, w_pos, w_neg,
               mtry, min_leaf, max_depth, seed):
    n_feat = ranks.shape[1]
    rng = SplitMix64(seed)
    idx = np.array(boot, dtype=np.int64)
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    cat_off = [-1]
    n_pos_l = [0]
    n_neg_l = [0]
    members = []
    members_len = 0
    stack = [(0, 0, len(idx), 0)]
    y = np.asarray(y, dtype=np.int64)
    while stack:
        node, s, e, depth = stack.pop()
        rows = idx[s:e]
        ys = y[rows]
        m = e - s
        npos = int(ys.sum())
        nneg = m - npos
        n_pos_l[node] = npos
        n_neg_l[node] = nneg
        if npos == 0 or nneg == 0 or m < 2 * min_leaf or (0 <= max_depth <= depth):
            continue
        tot_a = npos * w_pos
        tot_b = nneg * w_neg
        parent = _side_score(tot_a, tot_b)

        perm = list(range(n_feat))
        for i in range(mtry):
            j = i + rng.below(n_feat - i)
            perm[i], perm[j] = perm[j], perm[i]

        best = -np.inf
        best_f = -1
        best_thr = 0.0
        best_rank = 0
        best_members = None
        for f in perm[:mtry]:
            r = ranks[rows, f].astype(np.int64)
            if is_cat[f]:
                L = int(n_levels[f])
                pos_c = np.bincount(r[ys == 1], minlength=L)
                neg_c = np.bincount(r[ys == 0], minlength=L)
                present = np.flatnonzero(pos_c + neg_c)
                if present.size < 2:
                    continue
                a = pos_c[present].astype(np.float64) * w_pos
                b = neg_c[present].astype(np.float64) * w_neg
                key = (a - b) / (a + b)
                order = sorted(range(present.size), key=lambda i: (key[i], present[i]))
                min_code = present[0]
                cp = 0
                cn = 0
                for jj in range(1, present.size):
                    prev = order[jj - 1]
                    cp += int(pos_c[present[prev]])
                    cn += int(neg_c[present[prev]])
                    if key[order[jj]] == key[prev]:
                        continue
                    if cp + cn < min_leaf or m - cp - cn < min_leaf:
                        continue
                    score = (_side_score(float(cp) * w_pos, float(cn) * w_neg)
                             + _side_score(float(npos - cp) * w_pos, float(nneg - cn) * w_neg))
                    if score > best or (score == best and best_f == f):
                        memb = np.zeros(L, dtype=np.uint8)
                        prefix = present[[order[t] for t in range(jj)]]
                        if min_code in prefix:
                            memb[prefix] = 1
                        else:
                            memb[present] = 1
                            memb[prefix] = 0
                        if score > best or _prefer_membership(memb, best_members):
                            best = score
                            best_f = f
                            best_members = memb
            else:
                keys = np.sort((r << 1) | ys)
                rs = keys >> 1
                if rs[0] == rs[-1]:
                    continue
                cpos = np.cumsum(keys & 1)[:-1]
                bounds = np.flatnonzero(rs[:-1] != rs[1:])
                nl = bounds + 1
                ok = (nl >= min_leaf) & (m - nl >= min_leaf)
                bounds = bounds[ok]
                if bounds.size == 0:
                    continue
                nl = bounds + 1
                cl_pos = cpos[bounds]
                cl_neg = nl - cl_pos
                scores = (_side_score(cl_pos.astype(np.float64) * w_pos, cl_neg.astype(np.float64) * w_neg)
                          + _side_score((npos - cl_pos).astype(np.float64) * w_pos,
                                        (nneg - cl_neg).astype(np.float64) * w_neg))
                k = int(np.argmax(scores))
                if scores[k] > best:
                    best = float(scores[k])
                    best_f = f
                    i = bounds[k]
                    best_rank = int(rs[i])
                    lo = uniq[uniq_off[f] + rs[i]]
                    hi = uniq[uniq_off[f] + rs[i + 1]]
                    t = lo + (hi - lo) * 0.5
                    best_thr = lo if t >= hi else t
                    best_members = None
        if best_f < 0 or not (best - parent > GAIN_TOL * (tot_a + tot_b)):
            continue

        r = ranks[rows, best_f]
        if is_cat[best_f]:
            go_left = best_members[r].astype(bool)
            cat_off[node] = members_len
            members.append(best_members)
            members_len += best_members.size
        else:
            go_left = r <= best_rank
            threshold[node] = best_thr
        feature[node] = best_f
        nleft = int(go_left.sum())
        idx[s:e] = np.concatenate([rows[go_left], rows[~go_left]])
        lid = len(feature)
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1),
                       (cat_off, -1), (n_pos_l, 0), (n_neg_l, 0)):
            lst.extend([v, v])
        left[node] = lid
        right[node] = lid + 1
        stack.append((lid + 1, s + nleft, e, depth + 1))
        stack.append((lid, s, s + nleft, depth + 1))

    return {
        "feature": np.array(feature, dtype=np.int32),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int32),
        "right": np.array(right, dtype=np.int32),
        "cat_offset": np.array(cat_off, dtype=np.int32),
        "n_pos": np.array(n_pos_l, dtype=np.int32),
        "n_neg": np.array(n_neg_l, dtype=np.int32),
        "members": (np.concatenate(members) if members else np.zeros(0, dtype=np.uint8)).astype(np.uint8),
    }


def tree_votes(X, is_cat, n_levels, feature, threshold, left, right, cat_offset,
               n_pos, n_neg, members, roots, w_pos, w_neg, tie_positive):
    """Per-(row, tree) positive votes as a uint8 matrix of shape (n_rows, n_trees).

    Tree arrays are the concatenation of all trees; child and member offsets
    are global.
    """
    n = X.shape[0]
    out = np.zeros((n, len(roots)), dtype=np.uint8)
    rows = np.arange(n)
    for t, root in enumerate(roots):
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            ar = rows[active]
            nd = node[active]
            f = feature[nd]
            x = X[ar, f]
            go_left = np.empty(ar.size, dtype=bool)
            cat = is_cat[f].astype(bool)
            num = ~cat
            go_left[num] = x[num] <= threshold[nd[num]]
            if cat.any():
                code = x[cat].astype(np.int64)
                valid = (code >= 0) & (code < n_levels[f[cat]])
                hit = np.zeros(code.size, dtype=bool)
                pos = cat_offset[nd[cat]][valid] + code[valid]
                hit[valid] = members[pos].astype(bool)
                go_left[cat] = hit
            node[ar] = np.where(go_left, left[nd], right[nd])
            active[ar] = feature[node[ar]] >= 0
        a = n_pos[node].astype(np.float64) * w_pos
        b = n_neg[node].astype(np.float64) * w_neg
        out[:, t] = (a > b) | ((a == b) & bool(tie_positive))
    return out
