# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Chebyshev step for the two-photon block of the real-space model."""


def pair_cheb_step(const double complex[:, ::1] v1,
                   const double complex[:, ::1] v0,
                   double complex[:, ::1] out,
                   double complex[:, ::1] acc,
                   double complex coef,
                   double complex alpha,
                   double complex diag,
                   double U, double J,
                   Py_ssize_t n1, const double complex[::1] u1,
                   Py_ssize_t n2, const double complex[::1] u2):
    """out = alpha * (H - shift) v1 - v0 and acc += coef * out.

    (H - shift) v(a, b) = diag v - U delta_ab v
                          - J [(v(a-1,b) + v(a+1,b)) + (v(a,b-1) + v(a,b+1))]
    plus the source rows u1, u2 attached at sites n1, n2 (coupling-weighted;
    alpha is applied here).
    Only the upper triangle is computed and then mirrored, so symmetric
    input yields exactly symmetric output."""
    cdef Py_ssize_t n = v1.shape[0]
    cdef Py_ssize_t a, b, am, ap, bm, bp
    cdef double complex h, s1, s2, r
    for a in range(n):
        am = a - 1 if a > 0 else n - 1
        ap = a + 1 if a < n - 1 else 0
        for b in range(a, n):
            bm = b - 1 if b > 0 else n - 1
            bp = b + 1 if b < n - 1 else 0
            s1 = v1[am, b] + v1[ap, b]
            s2 = v1[a, bm] + v1[a, bp]
            h = diag * v1[a, b] - J * (s1 + s2)
            if a == b:
                h = h - U * v1[a, b]
            if a == n1:
                h = h + u1[b]
            if b == n1:
                h = h + u1[a]
            if a == n2:
                h = h + u2[b]
            if b == n2:
                h = h + u2[a]
            r = alpha * h - v0[a, b]
            out[a, b] = r
            acc[a, b] = acc[a, b] + coef * r
            if b != a:
                out[b, a] = r
                acc[b, a] = acc[b, a] + coef * r
