# cython: language_level=3
"""Compiled dynamics kernels.

Same contract as ``_kernels_py``; loops over bodies run on raw C arrays.
Row-major 3x3 rotations, angular-first spatial vectors.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos
from libc.string cimport memset

cnp.import_array()


cdef inline void rot_axis(const double* ax, double th, double* R) noexcept nogil:
    cdef double x = ax[0], y = ax[1], z = ax[2]
    cdef double s = sin(th), c = cos(th), t = 1.0 - c
    R[0] = t*x*x + c;   R[1] = t*x*y - s*z; R[2] = t*x*z + s*y
    R[3] = t*x*y + s*z; R[4] = t*y*y + c;   R[5] = t*y*z - s*x
    R[6] = t*x*z - s*y; R[7] = t*y*z + s*x; R[8] = t*z*z + c


cdef inline void mat3mul(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3*i + j] = A[3*i]*B[j] + A[3*i + 1]*B[3 + j] + A[3*i + 2]*B[6 + j]


cdef inline void mat3vec(const double* A, const double* x, double* y) noexcept nogil:
    y[0] = A[0]*x[0] + A[1]*x[1] + A[2]*x[2]
    y[1] = A[3]*x[0] + A[4]*x[1] + A[5]*x[2]
    y[2] = A[6]*x[0] + A[7]*x[1] + A[8]*x[2]


cdef inline void mat3tvec(const double* A, const double* x, double* y) noexcept nogil:
    y[0] = A[0]*x[0] + A[3]*x[1] + A[6]*x[2]
    y[1] = A[1]*x[0] + A[4]*x[1] + A[7]*x[2]
    y[2] = A[2]*x[0] + A[5]*x[1] + A[8]*x[2]


cdef inline void cross3(const double* a, const double* b, double* c) noexcept nogil:
    c[0] = a[1]*b[2] - a[2]*b[1]
    c[1] = a[2]*b[0] - a[0]*b[2]
    c[2] = a[0]*b[1] - a[1]*b[0]


cdef inline void relative(const double* Rt, const double* pt, const double* ax,
                          long jt, double qi, double* R, double* r) noexcept nogil:
    cdef double Rj[9]
    cdef double d[3]
    cdef int k
    if jt == 0:
        rot_axis(ax, qi, Rj)
        mat3mul(Rt, Rj, R)
        for k in range(3):
            r[k] = pt[k]
    else:
        for k in range(9):
            R[k] = Rt[k]
        for k in range(3):
            d[k] = ax[k] * qi
        mat3vec(Rt, d, r)
        for k in range(3):
            r[k] += pt[k]


cdef inline void xm(const double* R, const double* r, const double* m, double* out) noexcept nogil:
    cdef double t[3]
    cdef double c[3]
    cross3(r, m, c)
    t[0] = m[3] - c[0]; t[1] = m[4] - c[1]; t[2] = m[5] - c[2]
    mat3tvec(R, m, out)
    mat3tvec(R, t, out + 3)


cdef inline void xft_add(const double* R, const double* r, const double* f, double* out) noexcept nogil:
    cdef double fl[3]
    cdef double n[3]
    cdef double c[3]
    mat3vec(R, f + 3, fl)
    mat3vec(R, f, n)
    cross3(r, fl, c)
    out[0] += n[0] + c[0]; out[1] += n[1] + c[1]; out[2] += n[2] + c[2]
    out[3] += fl[0]; out[4] += fl[1]; out[5] += fl[2]


cdef inline void crm_add(const double* v, const double* m, double scale, double* out) noexcept nogil:
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cross3(v, m, a)
    cross3(v, m + 3, b)
    cross3(v + 3, m, c)
    out[0] += scale*a[0]; out[1] += scale*a[1]; out[2] += scale*a[2]
    out[3] += scale*(b[0] + c[0]); out[4] += scale*(b[1] + c[1]); out[5] += scale*(b[2] + c[2])


cdef inline void crf_add(const double* v, const double* f, double* out) noexcept nogil:
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cross3(v, f, a)
    cross3(v + 3, f + 3, b)
    cross3(v, f + 3, c)
    out[0] += a[0] + b[0]; out[1] += a[1] + b[1]; out[2] += a[2] + b[2]
    out[3] += c[0]; out[4] += c[1]; out[5] += c[2]


cdef inline void mat6vec(const double* A, const double* x, double* y) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(6):
        s = 0.0
        for j in range(6):
            s += A[6*i + j] * x[j]
        y[i] = s


cdef inline void subspace(long jt, const double* ax, double* s) noexcept nogil:
    cdef int k
    for k in range(6):
        s[k] = 0.0
    if jt == 0:
        s[0] = ax[0]; s[1] = ax[1]; s[2] = ax[2]
    else:
        s[3] = ax[0]; s[4] = ax[1]; s[5] = ax[2]


cdef inline double dot6(const double* a, const double* b) noexcept nogil:
    return a[0]*b[0] + a[1]*b[1] + a[2]*b[2] + a[3]*b[3] + a[4]*b[4] + a[5]*b[5]


def kinematics(tree, base_R, base_p, qj, v=None, bint with_acc=False):
    cdef const long[::1] parent = tree.parent
    cdef const long[::1] jtype = tree.jtype
    cdef const double[:, ::1] axis = tree.axis
    cdef const double[:, :, ::1] Rt = tree.R_tree
    cdef const double[:, ::1] pt = tree.p_tree
    cdef const double[:, ::1] Sb = tree.S_base
    cdef int nb = tree.nb, b = tree.base_dim
    cdef const double[::1] q = np.ascontiguousarray(qj, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] Rw_a = np.empty((nb, 3, 3))
    cdef cnp.ndarray[double, ndim=2] pw_a = np.empty((nb, 3))
    cdef double[:, :, ::1] Rw = Rw_a
    cdef double[:, ::1] pw = pw_a
    cdef double[:, ::1] vel
    cdef double[:, ::1] acc
    cdef const double[::1] vv
    cdef bint want_vel = v is not None
    cdef bint want_acc = want_vel and with_acc
    cdef double R[9]
    cdef double r[3]
    cdef double tmp[3]
    cdef double s[6]
    cdef int i, k, c, p
    vel_a = acc_a = None
    Rw_a[0] = base_R
    pw_a[0] = base_p
    if want_vel:
        vv = np.ascontiguousarray(v, dtype=np.float64)
        vel_a = np.zeros((nb, 6))
        vel = vel_a
        for k in range(6):
            for c in range(b):
                vel[0, k] += Sb[k, c] * vv[c]
        if want_acc:
            acc_a = np.zeros((nb, 6))
            acc = acc_a
    with nogil:
        for i in range(1, nb):
            p = parent[i]
            relative(&Rt[i, 0, 0], &pt[i, 0], &axis[i, 0], jtype[i], q[i - 1], R, r)
            mat3mul(&Rw[p, 0, 0], R, &Rw[i, 0, 0])
            mat3vec(&Rw[p, 0, 0], r, tmp)
            for k in range(3):
                pw[i, k] = pw[p, k] + tmp[k]
            if want_vel:
                subspace(jtype[i], &axis[i, 0], s)
                for k in range(6):
                    s[k] *= vv[b + i - 1]
                xm(R, r, &vel[p, 0], &vel[i, 0])
                for k in range(6):
                    vel[i, k] += s[k]
                if want_acc:
                    xm(R, r, &acc[p, 0], &acc[i, 0])
                    crm_add(&vel[i, 0], s, 1.0, &acc[i, 0])
    return Rw_a, pw_a, vel_a, acc_a


def rnea(tree, base_R, qj, v, a, gravity, fext=None):
    cdef const long[::1] parent = tree.parent
    cdef const long[::1] jtype = tree.jtype
    cdef const double[:, ::1] axis = tree.axis
    cdef const double[:, :, ::1] Rt = tree.R_tree
    cdef const double[:, ::1] pt = tree.p_tree
    cdef const double[:, :, ::1] I6 = tree.inertia
    cdef const double[:, ::1] Sb = tree.S_base
    cdef int nb = tree.nb, b = tree.base_dim
    cdef int nv = b + nb - 1
    cdef const double[::1] q = np.ascontiguousarray(qj, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[::1] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] R0 = np.ascontiguousarray(base_R, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(gravity, dtype=np.float64)
    cdef bint has_ext = fext is not None
    cdef const double[:, ::1] fe
    if has_ext:
        fe = np.ascontiguousarray(fext, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] Rr_a = np.empty((nb, 3, 3))
    cdef cnp.ndarray[double, ndim=2] rr_a = np.empty((nb, 3))
    cdef cnp.ndarray[double, ndim=2] vel_a = np.zeros((nb, 6))
    cdef cnp.ndarray[double, ndim=2] acc_a = np.zeros((nb, 6))
    cdef cnp.ndarray[double, ndim=2] f_a = np.zeros((nb, 6))
    cdef cnp.ndarray[double, ndim=2] S_a = np.zeros((nb, 6))
    cdef cnp.ndarray[double, ndim=1] tau_a = np.zeros(nv)
    cdef double[:, :, ::1] Rr = Rr_a
    cdef double[:, ::1] rr = rr_a
    cdef double[:, ::1] vel = vel_a
    cdef double[:, ::1] acc = acc_a
    cdef double[:, ::1] f = f_a
    cdef double[:, ::1] S = S_a
    cdef double[::1] tau = tau_a
    cdef double Iv[6]
    cdef double sq[6]
    cdef int i, k, c, p
    with nogil:
        for k in range(6):
            for c in range(b):
                vel[0, k] += Sb[k, c] * vv[c]
                acc[0, k] += Sb[k, c] * aa[c]
        for k in range(3):
            acc[0, 3 + k] -= R0[0, k]*g[0] + R0[1, k]*g[1] + R0[2, k]*g[2]
        mat6vec(&I6[0, 0, 0], &acc[0, 0], &f[0, 0])
        mat6vec(&I6[0, 0, 0], &vel[0, 0], Iv)
        crf_add(&vel[0, 0], Iv, &f[0, 0])
        for i in range(1, nb):
            p = parent[i]
            relative(&Rt[i, 0, 0], &pt[i, 0], &axis[i, 0], jtype[i], q[i - 1], &Rr[i, 0, 0], &rr[i, 0])
            subspace(jtype[i], &axis[i, 0], &S[i, 0])
            xm(&Rr[i, 0, 0], &rr[i, 0], &vel[p, 0], &vel[i, 0])
            xm(&Rr[i, 0, 0], &rr[i, 0], &acc[p, 0], &acc[i, 0])
            for k in range(6):
                sq[k] = S[i, k] * vv[b + i - 1]
                vel[i, k] += sq[k]
                acc[i, k] += S[i, k] * aa[b + i - 1]
            crm_add(&vel[i, 0], sq, 1.0, &acc[i, 0])
            mat6vec(&I6[i, 0, 0], &acc[i, 0], &f[i, 0])
            mat6vec(&I6[i, 0, 0], &vel[i, 0], Iv)
            crf_add(&vel[i, 0], Iv, &f[i, 0])
        if has_ext:
            for i in range(nb):
                for k in range(6):
                    f[i, k] -= fe[i, k]
        for i in range(nb - 1, 0, -1):
            tau[b + i - 1] = dot6(&S[i, 0], &f[i, 0])
            xft_add(&Rr[i, 0, 0], &rr[i, 0], &f[i, 0], &f[parent[i], 0])
        for c in range(b):
            for k in range(6):
                tau[c] += Sb[k, c] * f[0, k]
    return tau_a


cdef inline void xmat(const double* R, const double* r, double* X) noexcept nogil:
    # X = [[E, 0], [-E r~, E]] with E = R^T, row-major 6x6
    cdef int i, j
    cdef double rx[9]
    cdef double Er[9]
    memset(X, 0, 36 * sizeof(double))
    rx[0] = 0.0;   rx[1] = -r[2]; rx[2] = r[1]
    rx[3] = r[2];  rx[4] = 0.0;   rx[5] = -r[0]
    rx[6] = -r[1]; rx[7] = r[0];  rx[8] = 0.0
    for i in range(3):
        for j in range(3):
            Er[3*i + j] = R[i]*rx[j] + R[3 + i]*rx[3 + j] + R[6 + i]*rx[6 + j]
    for i in range(3):
        for j in range(3):
            X[6*i + j] = R[3*j + i]
            X[6*(i + 3) + j + 3] = R[3*j + i]
            X[6*(i + 3) + j] = -Er[3*i + j]


def crba(tree, qj):
    cdef const long[::1] parent = tree.parent
    cdef const long[::1] jtype = tree.jtype
    cdef const double[:, ::1] axis = tree.axis
    cdef const double[:, :, ::1] Rt = tree.R_tree
    cdef const double[:, ::1] pt = tree.p_tree
    cdef const double[:, ::1] Sb = tree.S_base
    cdef int nb = tree.nb, b = tree.base_dim
    cdef int nv = b + nb - 1
    cdef const double[::1] q = np.ascontiguousarray(qj, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] Ic_a = np.array(tree.inertia, dtype=np.float64, order="C")
    cdef cnp.ndarray[double, ndim=3] X_a = np.empty((nb, 6, 6))
    cdef cnp.ndarray[double, ndim=2] S_a = np.zeros((nb, 6))
    cdef cnp.ndarray[double, ndim=2] M_a = np.zeros((nv, nv))
    cdef double[:, :, ::1] Ic = Ic_a
    cdef double[:, :, ::1] X = X_a
    cdef double[:, ::1] S = S_a
    cdef double[:, ::1] M = M_a
    cdef double R[9]
    cdef double r[3]
    cdef double Y[36]
    cdef double F[6]
    cdef double G[6]
    cdef double acc, val
    cdef int i, j, k, l, m, p, ii, jj, c
    with nogil:
        for i in range(1, nb):
            relative(&Rt[i, 0, 0], &pt[i, 0], &axis[i, 0], jtype[i], q[i - 1], R, r)
            xmat(R, r, &X[i, 0, 0])
            subspace(jtype[i], &axis[i, 0], &S[i, 0])
        for i in range(nb - 1, 0, -1):
            p = parent[i]
            # Y = Ic_i X_i ; Ic_p += X_i^T Y
            for k in range(6):
                for l in range(6):
                    acc = 0.0
                    for m in range(6):
                        acc = acc + Ic[i, k, m] * X[i, m, l]
                    Y[6*k + l] = acc
            for k in range(6):
                for l in range(6):
                    acc = 0.0
                    for m in range(6):
                        acc = acc + X[i, m, k] * Y[6*m + l]
                    Ic[p, k, l] += acc
        for i in range(1, nb):
            ii = b + i - 1
            mat6vec(&Ic[i, 0, 0], &S[i, 0], F)
            M[ii, ii] = dot6(&S[i, 0], F)
            j = i
            while parent[j] != 0:
                for k in range(6):
                    acc = 0.0
                    for m in range(6):
                        acc = acc + X[j, m, k] * F[m]
                    G[k] = acc
                for k in range(6):
                    F[k] = G[k]
                j = parent[j]
                jj = b + j - 1
                val = dot6(&S[j, 0], F)
                M[ii, jj] = val
                M[jj, ii] = val
            for k in range(6):
                acc = 0.0
                for m in range(6):
                    acc = acc + X[j, m, k] * F[m]
                G[k] = acc
            for c in range(b):
                val = 0.0
                for k in range(6):
                    val = val + Sb[k, c] * G[k]
                M[ii, c] = val
                M[c, ii] = val
        for c in range(b):
            for l in range(b):
                val = 0.0
                for k in range(6):
                    for m in range(6):
                        val = val + Sb[k, c] * Ic[0, k, m] * Sb[m, l]
                M[c, l] = val
    return M_a
