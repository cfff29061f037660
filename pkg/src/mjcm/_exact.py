"""Exact rational structure constants.

Operators are rebuilt in the similarity frame ``S O S^-1`` with
``S = diag(sqrt(p!))``, where ``a`` has entries 1 and ``a^dag`` has entries
``p + 1``. Every operator of the model is then an integer matrix, commutators
are exact, and the expansion coefficients follow from a sparse Gauss-Jordan
elimination over ``Fraction``. Similarity preserves commutators and linear
relations, so the coefficients equal those of the physical operators.

Coefficients are solved for unit coupling; the general case follows from
phase invariance and the scaling ``|gamma|^(1 + deg_j - deg_i)`` with
``deg = 1`` for the I and F families.
"""
from __future__ import annotations

from collections import defaultdict
from fractions import Fraction

import numpy as np

Sparse = dict  # row -> {col: int | Fraction}

NAMES = ("N1", "N2", "Delta", "I", "F", "N21")


def _mul(A: Sparse, B: Sparse) -> Sparse:
    out = {}
    for r, row in A.items():
        acc = defaultdict(int)
        for k, v in row.items():
            rb = B.get(k)
            if rb:
                for c, w in rb.items():
                    acc[c] += v * w
        acc = {c: v for c, v in acc.items() if v != 0}
        if acc:
            out[r] = acc
    return out


def _add(A: Sparse, B: Sparse, sa=1, sb=1) -> Sparse:
    out = {r: {c: sa * v for c, v in row.items()} for r, row in A.items()}
    for r, row in B.items():
        o = out.setdefault(r, {})
        for c, v in row.items():
            nv = o.get(c, 0) + sb * v
            if nv:
                o[c] = nv
            else:
                o.pop(c, None)
        if not o:
            del out[r]
    return out


def _transpose(A: Sparse) -> Sparse:
    out = {}
    for r, row in A.items():
        for c, v in row.items():
            out.setdefault(c, {})[r] = v
    return out


def _comm(A: Sparse, B: Sparse) -> Sparse:
    return _add(_mul(A, B), _mul(B, A), 1, -1)


def _eye(n: int) -> Sparse:
    return {i: {i: 1} for i in range(n)}


def _build_base(n_max: int, m: int) -> dict[str, Sparse]:
    d = n_max + 1
    dim = 4 * d

    def idx(f, p):
        return f * d + p

    a, ad, b1, b2 = {}, {}, {}, {}
    for f in range(4):
        for p in range(1, d):
            a.setdefault(idx(f, p - 1), {})[idx(f, p)] = 1
        for p in range(d - 1):
            ad.setdefault(idx(f, p + 1), {})[idx(f, p)] = p + 1
    # fermion index f = 2*n1 + n2, with 1 meaning occupied
    for n2 in (0, 1):
        for p in range(d):
            b1.setdefault(idx(n2, p), {})[idx(2 + n2, p)] = 1
    for n1 in (0, 1):
        for p in range(d):
            b2.setdefault(idx(2 * n1, p), {})[idx(2 * n1 + 1, p)] = (-1) ** n1
    b1d, b2d = _transpose(b1), _transpose(b2)
    n1op, n2op = _mul(b1d, b1), _mul(b2d, b2)
    am, adm = _eye(dim), _eye(dim)
    for _ in range(m):
        am, adm = _mul(am, a), _mul(adm, ad)
    x = _mul(_mul(am, b1), b2d)
    xd = _mul(_mul(b2, b1d), adm)
    return {
        "a": a,
        "ad": ad,
        "N1": n1op,
        "N2": n2op,
        "Delta": _mul(ad, a),
        "N21": _mul(n2op, n1op),
        "I": _add(x, xd),
        "F": _add(x, xd, 1, -1),  # F = i * this
        "dim": dim,
    }


def _members(base: dict, variant: str, depth: int) -> list[tuple[str, Sparse, int]]:
    """(label, real integer matrix, phase) with member = i**phase * matrix.

    set2 and set3 members are scaled by 2 uniformly, which leaves the
    structure constants unchanged.
    """
    dim = base["dim"]
    an, adn, numn = _eye(dim), _eye(dim), _eye(dim)
    out = []
    for n in range(depth + 1):
        dn = _mul(adn, an)
        for name in NAMES:
            O = base[name]
            if variant == "set1":
                M = _mul(_mul(adn, O), an)
            elif variant == "set2":
                M = _add(_mul(O, dn), _mul(dn, O))
            else:
                M = _add(_mul(O, numn), _mul(numn, O))
            out.append((f"{name}[{n}]", M, 1 if name == "F" else 0))
        an, adn = _mul(an, base["a"]), _mul(adn, base["ad"])
        numn = _mul(numn, base["Delta"])
    return out


def _project(A: Sparse, keep) -> Sparse:
    out = {}
    for r, row in A.items():
        if keep(r):
            kept = {c: v for c, v in row.items() if keep(c)}
            if kept:
                out[r] = kept
    return out


def _rref_solve(cols: list[Sparse], rhss: list[Sparse]):
    """Solve ``sum_i g_ij cols_i = rhs_j`` exactly.

    Returns the float coefficient matrix, the indices of free (dependent)
    columns, and per-rhs largest unexplained entry (0 when consistent).
    """
    pos = {}

    def vec(M):
        v = {}
        for r, row in M.items():
            for c, x in row.items():
                v[pos.setdefault((r, c), len(pos))] = Fraction(x)
        return v

    nm, nr = len(cols), len(rhss)
    rows = defaultdict(dict)
    for j, M in enumerate(cols):
        for k, x in vec(M).items():
            rows[k][j] = x
    for j, M in enumerate(rhss):
        for k, x in vec(M).items():
            rows[k][nm + j] = x
    remaining = list(rows.values())
    piv = {}
    for col in range(nm):
        cand = [r for r in remaining if col in r]
        if not cand:
            continue
        pr = min(cand, key=len)
        remaining = [r for r in remaining if r is not pr]
        inv = 1 / pr[col]
        pr = {c: v * inv for c, v in pr.items()}
        for r in list(remaining) + list(piv.values()):
            if col in r:
                f = r[col]
                for c, v in pr.items():
                    nv = r.get(c, 0) - f * v
                    if nv:
                        r[c] = nv
                    else:
                        r.pop(c, None)
        piv[col] = pr
    G = np.zeros((nm, nr))
    for col, r in piv.items():
        for c, v in r.items():
            if c >= nm:
                G[col, c - nm] = float(v)
    leftover = np.zeros(nr)
    for r in remaining:
        for c, v in r.items():
            if c >= nm:
                leftover[c - nm] = max(leftover[c - nm], abs(float(v)))
    free = [c for c in range(nm) if c not in piv]
    return G, free, leftover


def unit_coupling_constants(n_max: int, m: int, variant: str, depth: int, n_safe: int | None = None):
    """Structure constants of each Hamiltonian part at unit coupling.

    Returns
    -------
    labels : list of str
    parts : dict
        ``{"N1", "N2", "Delta", "I"} -> (g, leftover)`` where ``g[i, j]``
        satisfies ``[h, O_j] = i sum_i g[i, j] O_i``.
    free : list of str
        Members left undetermined (dependent or vanishing); their rows are 0.
    """
    base = _build_base(n_max, m)
    full = _members(base, variant, depth)
    if n_safe is not None:
        d = n_max + 1

        def keep(k):
            return k % d <= n_safe

        members = [(lab, _project(M, keep), ph) for lab, M, ph in full]
    else:
        keep = None
        members = full
    labels = [lab for lab, _, _ in members]
    L = len(members)
    real = [i for i, (_, _, ph) in enumerate(members) if ph == 0]
    imag = [i for i, (_, _, ph) in enumerate(members) if ph == 1]
    parts = {}
    free_all = set()
    for part in ("N1", "N2", "Delta", "I"):
        h = base[part]
        rhs_imag, rhs_real = [], []
        for j, (_, M, ph) in enumerate(full):
            C = _comm(h, M)
            if keep is not None:
                C = _project(C, keep)
            if ph == 0:
                rhs_imag.append((j, _add({}, C, 1, -1)))
            else:
                rhs_real.append((j, C))
        g = np.zeros((L, L))
        leftover = np.zeros(L)
        for group, rhs in ((imag, rhs_imag), (real, rhs_real)):
            if not rhs:
                continue
            G, free, left = _rref_solve([members[i][1] for i in group], [M for _, M in rhs])
            free_all.update(labels[group[f]] for f in free)
            for a, i in enumerate(group):
                for b, (j, _) in enumerate(rhs):
                    g[i, j] = G[a, b]
            for b, (j, _) in enumerate(rhs):
                leftover[j] = left[b]
        parts[part] = (g, leftover)
    return labels, parts, sorted(free_all, key=labels.index)
