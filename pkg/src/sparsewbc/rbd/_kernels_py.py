"""Pure-Python dynamics kernels (reference implementation and fallback).

Conventions shared with the compiled kernels in ``_kernels.pyx``:

* spatial vectors are angular-first ``[w; v]`` in body coordinates;
* body 0 is the floating base, its velocity is ``S_base @ v[:base_dim]``;
* body ``i >= 1`` owns one joint, generalized index ``base_dim + i - 1``;
* for each body the kernels use ``R_rel`` (child axes in parent
  coordinates) and ``r`` (child origin in parent coordinates).
"""
import numpy as np


def _skew(a):
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


def _rot(axis, th):
    K = _skew(axis)
    return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)


def _relative(tree, i, qi):
    Rt = tree.R_tree[i]
    if tree.jtype[i] == 0:
        return Rt @ _rot(tree.axis[i], qi), tree.p_tree[i].copy()
    return Rt.copy(), tree.p_tree[i] + Rt @ (tree.axis[i] * qi)


def _motion_subspace(tree, i):
    s = np.zeros(6)
    if tree.jtype[i] == 0:
        s[:3] = tree.axis[i]
    else:
        s[3:] = tree.axis[i]
    return s


def _xm(R, r, m):
    # parent -> child, motion vector
    w = m[:3]
    return np.concatenate((R.T @ w, R.T @ (m[3:] - np.cross(r, w))))


def _xft(R, r, f):
    # child -> parent, force vector
    fl = R @ f[3:]
    return np.concatenate((R @ f[:3] + np.cross(r, fl), fl))


def _crm(v, m):
    w, u = v[:3], v[3:]
    return np.concatenate((np.cross(w, m[:3]), np.cross(w, m[3:]) + np.cross(u, m[:3])))


def _crf(v, f):
    w, u = v[:3], v[3:]
    return np.concatenate((np.cross(w, f[:3]) + np.cross(u, f[3:]), np.cross(w, f[3:])))


def _xmat(R, r):
    E = R.T
    X = np.zeros((6, 6))
    X[:3, :3] = E
    X[3:, 3:] = E
    X[3:, :3] = -E @ _skew(r)
    return X


def kinematics(tree, base_R, base_p, qj, v=None, with_acc=False):
    """World poses of every body; optionally body velocities and the
    velocity-product accelerations (zero ``qdd``, no gravity)."""
    nb, b = tree.nb, tree.base_dim
    Rw = np.empty((nb, 3, 3))
    pw = np.empty((nb, 3))
    Rw[0] = base_R
    pw[0] = base_p
    vel = acc = None
    if v is not None:
        vel = np.zeros((nb, 6))
        vel[0] = tree.S_base @ v[:b]
        if with_acc:
            acc = np.zeros((nb, 6))
    for i in range(1, nb):
        p = tree.parent[i]
        R, r = _relative(tree, i, qj[i - 1])
        Rw[i] = Rw[p] @ R
        pw[i] = pw[p] + Rw[p] @ r
        if vel is not None:
            sq = _motion_subspace(tree, i) * v[b + i - 1]
            vel[i] = _xm(R, r, vel[p]) + sq
            if acc is not None:
                acc[i] = _xm(R, r, acc[p]) + _crm(vel[i], sq)
    return Rw, pw, vel, acc


def rnea(tree, base_R, qj, v, a, gravity, fext=None):
    """Generalized forces ``M a + h(v) - sum J^T f_ext`` (body-frame fext)."""
    nb, b = tree.nb, tree.base_dim
    I6 = tree.inertia
    Rs = [None] * nb
    rs = [None] * nb
    S = [None] * nb
    vel = np.zeros((nb, 6))
    acc = np.zeros((nb, 6))
    f = np.zeros((nb, 6))
    vel[0] = tree.S_base @ v[:b]
    acc[0] = tree.S_base @ a[:b]
    acc[0, 3:] -= base_R.T @ gravity
    f[0] = I6[0] @ acc[0] + _crf(vel[0], I6[0] @ vel[0])
    for i in range(1, nb):
        p = tree.parent[i]
        R, r = _relative(tree, i, qj[i - 1])
        Rs[i], rs[i] = R, r
        s = S[i] = _motion_subspace(tree, i)
        k = b + i - 1
        vel[i] = _xm(R, r, vel[p]) + s * v[k]
        acc[i] = _xm(R, r, acc[p]) + s * a[k] + _crm(vel[i], s * v[k])
        f[i] = I6[i] @ acc[i] + _crf(vel[i], I6[i] @ vel[i])
    if fext is not None:
        f -= fext
    tau = np.zeros(b + nb - 1)
    for i in range(nb - 1, 0, -1):
        tau[b + i - 1] = S[i] @ f[i]
        f[tree.parent[i]] += _xft(Rs[i], rs[i], f[i])
    tau[:b] = tree.S_base.T @ f[0]
    return tau


def crba(tree, qj):
    """Joint-space mass matrix by composite rigid bodies."""
    nb, b = tree.nb, tree.base_dim
    nv = b + nb - 1
    Ic = tree.inertia.copy()
    X = [None] * nb
    S = [None] * nb
    for i in range(1, nb):
        R, r = _relative(tree, i, qj[i - 1])
        X[i] = _xmat(R, r)
        S[i] = _motion_subspace(tree, i)
    for i in range(nb - 1, 0, -1):
        Ic[tree.parent[i]] += X[i].T @ Ic[i] @ X[i]
    M = np.zeros((nv, nv))
    for i in range(1, nb):
        ii = b + i - 1
        F = Ic[i] @ S[i]
        M[ii, ii] = S[i] @ F
        j = i
        while tree.parent[j] != 0:
            F = X[j].T @ F
            j = tree.parent[j]
            jj = b + j - 1
            M[ii, jj] = M[jj, ii] = S[j] @ F
        F = X[j].T @ F
        M[ii, :b] = M[:b, ii] = tree.S_base.T @ F
    M[:b, :b] = tree.S_base.T @ Ic[0] @ tree.S_base
    return M
