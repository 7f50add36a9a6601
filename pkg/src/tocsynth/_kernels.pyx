# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels; mirror of ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

CONVERGED = 0
MAX_ITER = 1
DIVERGED = 2
SINGULAR = 3


cdef inline void _powers(const double* t, int n, int maxdeg, double* pw) noexcept nogil:
    cdef int j, d
    cdef int stride = maxdeg + 1
    for j in range(n):
        pw[j * stride] = 1.0
        for d in range(1, maxdeg + 1):
            pw[j * stride + d] = pw[j * stride + d - 1] * t[j]


cdef inline void _accumulate(double* out, const int* labels, const int* exps, const double* coefs,
                             Py_ssize_t nterms, int n, const double* pw, int stride) noexcept nogil:
    cdef Py_ssize_t k
    cdef int j
    cdef double term
    for k in range(nterms):
        term = coefs[k]
        for j in range(n):
            term *= pw[j * stride + exps[k * n + j]]
        out[labels[k]] += term


cdef int _gauss_solve(double* a, double* rhs, double* x, int n) noexcept nogil:
    cdef int i, j, col, piv, r, k
    cdef double amax = 0.0, v, best, tol, d, f, s, tmp
    for i in range(n * n):
        v = fabs(a[i])
        if v > amax:
            amax = v
    if amax == 0.0:
        return 0
    tol = 1e-14 * amax
    for col in range(n):
        piv = col
        best = fabs(a[col * n + col])
        for r in range(col + 1, n):
            v = fabs(a[r * n + col])
            if v > best:
                best = v
                piv = r
        if best <= tol:
            return 0
        if piv != col:
            for k in range(n):
                tmp = a[col * n + k]
                a[col * n + k] = a[piv * n + k]
                a[piv * n + k] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        d = a[col * n + col]
        for r in range(col + 1, n):
            f = a[r * n + col] / d
            if f != 0.0:
                for k in range(col, n):
                    a[r * n + k] -= f * a[col * n + k]
                rhs[r] -= f * rhs[col]
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, n):
            s -= a[i * n + k] * x[k]
        x[i] = s / a[i * n + i]
    return 1


cdef void _solve_step(const double* a, const double* rhs, double* x, int n, double* work) noexcept nogil:
    # work holds at least 2*n*n + 2*n doubles
    cdef double* w = work
    cdef double* b = work + n * n
    cdef double* ata = work + n * n + n
    cdef double* atb = work + 2 * n * n + n
    cdef int i, j, k
    cdef double s, dmax, lam
    for i in range(n * n):
        w[i] = a[i]
    for i in range(n):
        b[i] = rhs[i]
    if _gauss_solve(w, b, x, n):
        return
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += a[k * n + i] * a[k * n + j]
            ata[i * n + j] = s
        s = 0.0
        for k in range(n):
            s += a[k * n + i] * rhs[k]
        atb[i] = s
    dmax = 0.0
    for i in range(n):
        if ata[i * n + i] > dmax:
            dmax = ata[i * n + i]
    lam = 1e-12 * dmax if dmax > 0.0 else 1e-12
    for i in range(n):
        ata[i * n + i] += lam
    if not _gauss_solve(ata, atb, x, n):
        for i in range(n):
            x[i] = 0.0


def _arrays(cs):
    return (
        np.ascontiguousarray(cs.f_eq, dtype=np.int32),
        np.ascontiguousarray(cs.f_exp, dtype=np.int32).reshape(-1),
        np.ascontiguousarray(cs.f_coef, dtype=np.float64),
        np.ascontiguousarray(cs.j_ent, dtype=np.int32),
        np.ascontiguousarray(cs.j_exp, dtype=np.int32).reshape(-1),
        np.ascontiguousarray(cs.j_coef, dtype=np.float64),
    )


def eval_f(cs, t):
    cdef int n = cs.n, maxdeg = cs.maxdeg
    cdef int[::1] f_eq = np.ascontiguousarray(cs.f_eq, dtype=np.int32)
    cdef int[::1] f_exp = np.ascontiguousarray(cs.f_exp, dtype=np.int32).reshape(-1)
    cdef double[::1] f_coef = np.ascontiguousarray(cs.f_coef, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] pw = np.empty(n * (maxdeg + 1))
    out = np.zeros(n)
    cdef double[::1] ov = out
    _powers(&tv[0], n, maxdeg, &pw[0])
    if f_coef.shape[0]:
        _accumulate(&ov[0], &f_eq[0], &f_exp[0], &f_coef[0], f_coef.shape[0], n, &pw[0], maxdeg + 1)
    return out


def eval_j(cs, t):
    cdef int n = cs.n, maxdeg = cs.maxdeg
    cdef int[::1] j_ent = np.ascontiguousarray(cs.j_ent, dtype=np.int32)
    cdef int[::1] j_exp = np.ascontiguousarray(cs.j_exp, dtype=np.int32).reshape(-1)
    cdef double[::1] j_coef = np.ascontiguousarray(cs.j_coef, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] pw = np.empty(n * (maxdeg + 1))
    out = np.zeros(n * n)
    cdef double[::1] ov = out
    _powers(&tv[0], n, maxdeg, &pw[0])
    if j_coef.shape[0]:
        _accumulate(&ov[0], &j_ent[0], &j_exp[0], &j_coef[0], j_coef.shape[0], n, &pw[0], maxdeg + 1)
    return out


def newton_run(cs, roots, int p, double xi, guess, double eps, int max_iter, double blowup):
    """One deflated Newton attempt; see ``_pykernels.newton_run``."""
    cdef int n = cs.n, maxdeg = cs.maxdeg
    f_eq_a, f_exp_a, f_coef_a, j_ent_a, j_exp_a, j_coef_a = _arrays(cs)
    cdef int[::1] f_eq = f_eq_a
    cdef int[::1] f_exp = f_exp_a
    cdef double[::1] f_coef = f_coef_a
    cdef int[::1] j_ent = j_ent_a
    cdef int[::1] j_exp = j_exp_a
    cdef double[::1] j_coef = j_coef_a
    cdef double[:, ::1] rts = np.ascontiguousarray(np.asarray(roots, dtype=np.float64).reshape(-1, n))
    cdef int m = rts.shape[0]
    t_out = np.array(guess, dtype=np.float64, copy=True)
    cdef double[::1] t = t_out
    cdef Py_ssize_t nf = f_coef.shape[0], nj = j_coef.shape[0]
    cdef int stride = maxdeg + 1
    cdef double* pw = <double*> malloc(n * stride * sizeof(double))
    cdef double* F = <double*> malloc(n * sizeof(double))
    cdef double* J = <double*> malloc(n * n * sizeof(double))
    cdef double* G = <double*> malloc(n * sizeof(double))
    cdef double* Gp = <double*> malloc(n * n * sizeof(double))
    cdef double* grad = <double*> malloc(n * sizeof(double))
    cdef double* step = <double*> malloc(n * sizeof(double))
    cdef double* work = <double*> malloc((2 * n * n + 2 * n) * sizeof(double))
    cdef double update = INFINITY, eta, d2, dj, nrm, inv_eta, sc, update2, big, new, d
    cdef int it = 0, status = 1, i, j, q, k
    cdef bint singular, finite, broke = False
    if not (pw and F and J and G and Gp and grad and step and work):
        free(pw); free(F); free(J); free(G); free(Gp); free(grad); free(step); free(work)
        raise MemoryError()
    try:
        with nogil:
            while update > eps and it < max_iter:
                it += 1
                _powers(&t[0], n, maxdeg, pw)
                for i in range(n):
                    F[i] = 0.0
                for i in range(n * n):
                    J[i] = 0.0
                if nf:
                    _accumulate(F, &f_eq[0], &f_exp[0], &f_coef[0], nf, n, pw, stride)
                if nj:
                    _accumulate(J, &j_ent[0], &j_exp[0], &j_coef[0], nj, n, pw, stride)
                eta = 1.0
                for j in range(n):
                    grad[j] = 0.0
                singular = False
                for k in range(m):
                    d2 = 0.0
                    for j in range(n):
                        dj = t[j] - rts[k, j]
                        d2 += dj * dj
                    if d2 == 0.0:
                        singular = True
                        break
                    nrm = sqrt(d2)
                    for q in range(p):
                        eta *= nrm
                    for j in range(n):
                        grad[j] += p * (t[j] - rts[k, j]) / d2
                if singular:
                    status = 3
                    broke = True
                    break
                inv_eta = 1.0 / eta
                sc = inv_eta + xi
                for i in range(n):
                    G[i] = sc * F[i]
                for i in range(n):
                    for j in range(n):
                        Gp[i * n + j] = sc * J[i * n + j] - inv_eta * F[i] * grad[j]
                _solve_step(Gp, G, step, n, work)
                update2 = 0.0
                big = 0.0
                finite = True
                for j in range(n):
                    new = t[j] - step[j]
                    d = new - t[j]
                    update2 += d * d
                    t[j] = new
                    if not isfinite(new):
                        finite = False
                    elif fabs(new) > big:
                        big = fabs(new)
                update = sqrt(update2)
                if not finite or big > blowup:
                    status = 2
                    broke = True
                    break
        if not broke:
            status = 0 if update <= eps else 1
    finally:
        free(pw); free(F); free(J); free(G); free(Gp); free(grad); free(step); free(work)
    return t_out, it, status
