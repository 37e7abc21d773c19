# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Point-wise value/bound evaluation of a compiled QoI program.

Mirrors ``proqoi.bounds.propagate_arrays`` operation for operation; the
opcode table lives in ``proqoi.scan``.  Points are processed in blocks of
``BLK`` so each opcode runs as a tight loop over cache-resident rows.
"""
from libc.math cimport sqrt, fabs, fma, nextafter, isfinite, INFINITY, NAN, isinf
from libc.stdlib cimport malloc, free

cdef enum:
    OP_VAR = 0
    OP_CONST = 1
    OP_SCALE = 2
    OP_SUM = 3
    OP_PRODUCT = 4
    OP_QUOTIENT = 5
    OP_RADICAL = 6
    OP_POWER = 7
    OP_SQRT = 8

cdef enum:
    BLK = 256

cdef double U = 2.220446049250313e-16
cdef double G4 = 1.0 + 8.0 * 2.220446049250313e-16


cdef inline double ipow(double x, int n) noexcept nogil:
    # left-to-right products, matching bounds._ipow
    cdef double r
    cdef int i
    if n == 0:
        return 1.0
    r = x
    for i in range(n - 1):
        r = r * x
    return r


cdef double SAFE_OPERAND = 2.0 ** 990
cdef double SAFE_P_LO = 2.0 ** -960
cdef double SAFE_P_HI = 2.0 ** 1000


cdef inline double scale_up(double a, double b) noexcept nogil:
    # a*b (a >= 0) rounded up when nearest rounding went below; matches bounds._scale_bound
    cdef double p = a * b
    cdef bint safe
    if p == 0.0 and a > 0.0 and b > 0.0:
        return nextafter(0.0, INFINITY)
    if not (p > 0.0) or not isfinite(p):
        return p
    safe = a <= SAFE_OPERAND and b <= SAFE_OPERAND and SAFE_P_LO <= p <= SAFE_P_HI
    if not safe or fma(a, b, -p) > 0.0:
        return nextafter(p, INFINITY)
    return p


cdef Py_ssize_t run_block(const int *ops, const int *arg0, const int *arg1, Py_ssize_t nops,
                          const double *consts, const double *vals, const double *bnds,
                          Py_ssize_t stride, Py_ssize_t base, Py_ssize_t m,
                          double *sv, double *sb) noexcept nogil:
    # stack slot s occupies sv[s*BLK : s*BLK + m]; returns first bad index or -1
    cdef Py_ssize_t pc, j, bad = -1
    cdef int sp = 0, op, k, t, n, i
    cdef double *xv
    cdef double *xb
    cdef double *yv
    cdef double *yb
    cdef const double *src_v
    cdef const double *src_b
    cdef double a, w, g, v, b, v1, b1, v2, b2, s, ax, acc, tol, num
    cdef const double *coef
    for pc in range(nops):
        op = ops[pc]
        if op == OP_VAR:
            src_v = vals + arg0[pc] * stride + base
            src_b = bnds + arg0[pc] * stride + base
            xv = sv + sp * BLK
            xb = sb + sp * BLK
            for j in range(m):
                xv[j] = src_v[j]
                xb[j] = src_b[j]
            sp += 1
        elif op == OP_CONST:
            a = consts[arg0[pc]]
            xv = sv + sp * BLK
            xb = sb + sp * BLK
            for j in range(m):
                xv[j] = a
                xb[j] = 0.0
            sp += 1
        elif op == OP_SCALE:
            a = consts[arg0[pc]]
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            for j in range(m):
                xv[j] = a * xv[j]
                xb[j] = scale_up(fabs(a), xb[j])
        elif op == OP_SUM:
            k = arg0[pc]
            sp -= k
            xv = sv + sp * BLK
            xb = sb + sp * BLK
            g = 1.0 + 2 * (k + 1 if k + 1 > 4 else 4) * U
            for j in range(m):
                v = 0.0
                b = 0.0
                for t in range(k):
                    w = consts[arg1[pc] + t]
                    if w != 0.0:
                        v = v + w * xv[t * BLK + j]
                        b = b + fabs(w) * xb[t * BLK + j]
                xv[j] = v
                xb[j] = b * g
            sp += 1
        elif op == OP_PRODUCT:
            sp -= 1
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            yv = sv + sp * BLK
            yb = sb + sp * BLK
            for j in range(m):
                v1 = xv[j]
                b1 = xb[j]
                v2 = yv[j]
                b2 = yb[j]
                xv[j] = v1 * v2
                if isinf(b1) or isinf(b2):
                    xb[j] = INFINITY
                else:
                    xb[j] = (fabs(v1) * b2 + fabs(v2) * b1 + b1 * b2) * G4
        elif op == OP_QUOTIENT:
            sp -= 1
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            yv = sv + sp * BLK
            yb = sb + sp * BLK
            for j in range(m):
                v1 = xv[j]
                b1 = xb[j]
                v2 = yv[j]
                b2 = yb[j]
                a = fabs(v2)
                xv[j] = v1 / v2 if v2 != 0.0 else NAN
                if a > 0.0 and b2 < a and not isinf(b1):
                    num = fabs(v1) * b2 + a * b1
                    # an exact zero stays zero even when the divisor underflows
                    xb[j] = 0.0 if num == 0.0 else num / (a * min(fabs(v2 - b2), fabs(v2 + b2))) * G4
                else:
                    xb[j] = INFINITY
        elif op == OP_RADICAL:
            a = consts[arg0[pc]]
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            for j in range(m):
                b = xb[j]
                s = 1.0 * xv[j] + 1.0 * a
                ax = fabs(s)
                xv[j] = 1.0 / s if s != 0.0 else NAN
                if ax > 0.0 and b < ax:
                    xb[j] = 0.0 if b == 0.0 else b / (min(fabs(s - b), fabs(s + b)) * ax) * G4
                else:
                    xb[j] = INFINITY
        elif op == OP_POWER:
            n = arg0[pc]
            g = 1.0 + 2 * (2 * n + 2) * U
            coef = consts + arg1[pc] - 1  # coef[i] = C(n, i), i = 1..n
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            if n == 2:
                for j in range(m):
                    v = xv[j]
                    b = xb[j]
                    xv[j] = v * v
                    ax = fabs(v)
                    # 0 + (2*|v|)*b + (1*1)*(b*b), same steps as the general loop
                    xb[j] = (((0.0 + (coef[1] * ax) * b) + (coef[2] * 1.0) * (b * b)) * g
                             if not isinf(b) else INFINITY)
                continue
            for j in range(m):
                v = xv[j]
                b = xb[j]
                xv[j] = ipow(v, n)
                if isinf(b):
                    xb[j] = INFINITY
                else:
                    ax = fabs(v)
                    acc = 0.0
                    for i in range(1, n + 1):
                        acc = acc + coef[i] * ipow(ax, n - i) * ipow(b, i)
                    xb[j] = acc * g
        elif op == OP_SQRT:
            xv = sv + (sp - 1) * BLK
            xb = sb + (sp - 1) * BLK
            for j in range(m):
                v = xv[j]
                b = xb[j]
                if isinf(b):
                    xv[j] = sqrt(v if v > 0.0 else 0.0) if v == v else NAN
                    continue
                if v < 0.0:
                    tol = 1e-12 * (1.0 + b)
                    if v < -tol and (bad < 0 or j < bad):
                        bad = j
                    v = 0.0
                xv[j] = sqrt(v)
                if b == 0.0:
                    xb[j] = 0.0
                elif v == 0.0:
                    xb[j] = sqrt(b) * G4
                else:
                    xb[j] = b / (sqrt(v - b if v - b > 0.0 else 0.0) + sqrt(v)) * G4
    return bad


def scan_program(const int[::1] ops, const int[::1] arg0, const int[::1] arg1,
                 const double[::1] consts, const double[:, ::1] values,
                 const double[:, ::1] bounds, double[::1] out_val,
                 double[::1] out_bnd, Py_ssize_t start, Py_ssize_t stop,
                 int stack_size):
    """Fill ``out_val[start:stop]`` and ``out_bnd[start:stop]``.

    Returns the first point index whose square-root operand is negative
    beyond the clamp tolerance, or -1.
    """
    cdef Py_ssize_t base, m, j, hit, bad = -1
    cdef Py_ssize_t nops = ops.shape[0], stride = values.shape[1]
    cdef double *sv = <double *> malloc(stack_size * BLK * sizeof(double))
    cdef double *sb = <double *> malloc(stack_size * BLK * sizeof(double))
    if sv == NULL or sb == NULL:
        free(sv)
        free(sb)
        raise MemoryError()
    try:
        with nogil:
            base = start
            while base < stop:
                m = stop - base if stop - base < BLK else BLK
                hit = run_block(&ops[0], &arg0[0], &arg1[0], nops, &consts[0],
                                &values[0, 0], &bounds[0, 0], stride, base, m, sv, sb)
                if hit >= 0 and bad < 0:
                    bad = base + hit
                for j in range(m):
                    out_val[base + j] = sv[j]
                    out_bnd[base + j] = sb[j]
                base += m
    finally:
        free(sv)
        free(sb)
    return bad
