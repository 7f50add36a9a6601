"""Pure-Python numeric kernels.

Reference implementation of the compiled kernels in ``_kernels.pyx``.  Both
follow the same operation order so that the two backends agree to the last
bit on the same inputs.
"""

import math

import numpy as np

CONVERGED = 0
MAX_ITER = 1
DIVERGED = 2
SINGULAR = 3


def _powers(t, maxdeg):
    table = []
    for v in t:
        row = [1.0]
        for _ in range(maxdeg):
            row.append(row[-1] * v)
        table.append(row)
    return table


def _accumulate(out, labels, exps, coefs, pw):
    for label, mono, c in zip(labels, exps, coefs):
        term = c
        for j, e in enumerate(mono):
            term *= pw[j][e]
        out[label] += term


def _unpack(cs):
    return (
        cs.f_eq.tolist(),
        cs.f_exp.tolist(),
        cs.f_coef.tolist(),
        cs.j_ent.tolist(),
        cs.j_exp.tolist(),
        cs.j_coef.tolist(),
    )


def eval_f(cs, t):
    pw = _powers(t.tolist(), cs.maxdeg)
    out = [0.0] * cs.n
    _accumulate(out, cs.f_eq.tolist(), cs.f_exp.tolist(), cs.f_coef.tolist(), pw)
    return np.array(out)


def eval_j(cs, t):
    pw = _powers(t.tolist(), cs.maxdeg)
    out = [0.0] * (cs.n * cs.n)
    _accumulate(out, cs.j_ent.tolist(), cs.j_exp.tolist(), cs.j_coef.tolist(), pw)
    return np.array(out)


def _gauss_solve(a, rhs, n):
    """Partial-pivoting elimination in place; returns None when a pivot is negligible."""
    amax = 0.0
    for i in range(n):
        for j in range(n):
            v = abs(a[i][j])
            if v > amax:
                amax = v
    if amax == 0.0:
        return None
    tol = 1e-14 * amax
    for col in range(n):
        piv = col
        best = abs(a[col][col])
        for r in range(col + 1, n):
            v = abs(a[r][col])
            if v > best:
                best = v
                piv = r
        if best <= tol:
            return None
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            rhs[col], rhs[piv] = rhs[piv], rhs[col]
        d = a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] / d
            if f != 0.0:
                row_r = a[r]
                row_c = a[col]
                for k in range(col, n):
                    row_r[k] -= f * row_c[k]
                rhs[r] -= f * rhs[col]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, n):
            s -= a[i][k] * x[k]
        x[i] = s / a[i][i]
    return x


def solve_step(a, rhs, n):
    """Solve ``a x = rhs``; rank-deficient systems get a ridge-regularised least-squares step."""
    work = [row[:] for row in a]
    x = _gauss_solve(work, rhs[:], n)
    if x is not None:
        return x
    ata = [[0.0] * n for _ in range(n)]
    atb = [0.0] * n
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += a[k][i] * a[k][j]
            ata[i][j] = s
        s = 0.0
        for k in range(n):
            s += a[k][i] * rhs[k]
        atb[i] = s
    dmax = 0.0
    for i in range(n):
        if ata[i][i] > dmax:
            dmax = ata[i][i]
    lam = 1e-12 * dmax if dmax > 0.0 else 1e-12
    for i in range(n):
        ata[i][i] += lam
    x = _gauss_solve(ata, atb, n)
    if x is None:
        return [0.0] * n
    return x


def newton_run(cs, roots, p, xi, guess, eps, max_iter, blowup):
    """One deflated Newton attempt from ``guess``.

    Returns ``(t, iterations, status)`` with status one of CONVERGED,
    MAX_ITER, DIVERGED or SINGULAR.
    """
    n = cs.n
    f_eq, f_exp, f_coef, j_ent, j_exp, j_coef = _unpack(cs)
    maxdeg = cs.maxdeg
    rts = [list(r) for r in np.asarray(roots, dtype=float).reshape(-1, n)]
    t = [float(v) for v in guess]
    update = math.inf
    it = 0
    status = MAX_ITER
    while update > eps and it < max_iter:
        it += 1
        pw = _powers(t, maxdeg)
        F = [0.0] * n
        _accumulate(F, f_eq, f_exp, f_coef, pw)
        J = [0.0] * (n * n)
        _accumulate(J, j_ent, j_exp, j_coef, pw)
        eta = 1.0
        grad = [0.0] * n
        singular = False
        for r in rts:
            d2 = 0.0
            for j in range(n):
                dj = t[j] - r[j]
                d2 += dj * dj
            if d2 == 0.0:
                singular = True
                break
            nrm = math.sqrt(d2)
            for _ in range(p):
                eta *= nrm
            for j in range(n):
                grad[j] += p * (t[j] - r[j]) / d2
        if singular:
            status = SINGULAR
            break
        inv_eta = 1.0 / eta
        sc = inv_eta + xi
        G = [sc * F[i] for i in range(n)]
        Gp = [[sc * J[i * n + j] - inv_eta * F[i] * grad[j] for j in range(n)] for i in range(n)]
        step = solve_step(Gp, G, n)
        update2 = 0.0
        big = 0.0
        finite = True
        for j in range(n):
            new = t[j] - step[j]
            d = new - t[j]
            update2 += d * d
            t[j] = new
            if not math.isfinite(new):
                finite = False
            elif abs(new) > big:
                big = abs(new)
        update = math.sqrt(update2)
        if not finite or big > blowup:
            status = DIVERGED
            break
    else:
        status = CONVERGED if update <= eps else MAX_ITER
    return np.array(t), it, status
