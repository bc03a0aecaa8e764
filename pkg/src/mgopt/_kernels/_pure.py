"""Pure numpy implementations of the hot kernels.

These are the reference semantics; the compiled extension in ``_core``
reimplements the same functions with identical signatures and must agree
to floating-point noise.  Keep the operation order here in sync with the
.pyx file.
"""

import numpy as np


def boxqp_pg(A, b, lower, upper, x0, step, tol, max_iter):
    """Projected gradient on 0.5 x'Ax + b'x over a box.

    Iterates x <- clip(x - step*(Ax + b)) until the natural residual
    ||x - clip(x - (Ax + b))||_inf drops to `tol`.  Returns
    (x, residual, iterations).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    g = A @ x + b
    residual = float(np.abs(x - np.clip(x - g, lower, upper)).max())
    iters = 0
    while residual > tol and iters < max_iter:
        x = np.clip(x - step * g, lower, upper)
        g = A @ x + b
        residual = float(np.abs(x - np.clip(x - g, lower, upper)).max())
        iters += 1
    return x, residual, iters


def boxqp_track(A, B, lower, upper, x0, step, tol, max_iter):
    """Solve the box QP for every row of B, warm-starting along the way.

    B, lower, upper have shape (T, n).  Returns (X, residuals, iterations)
    with X of shape (T, n).
    """
    B = np.asarray(B, dtype=float)
    T, n = B.shape
    X = np.empty((T, n))
    residuals = np.empty(T)
    iterations = np.empty(T, dtype=np.int64)
    x = np.asarray(x0, dtype=float)
    for k in range(T):
        x, res, it = boxqp_pg(A, B[k], lower[k], upper[k], x, step, tol, max_iter)
        X[k] = x
        residuals[k] = res
        iterations[k] = it
    return X, residuals, iterations


def pogd_run(A, B, lower, upper, x0, h):
    """Projected online gradient descent over the horizon.

    Row k of the output is clip(x - h*(A x + b_k)) with x the previous
    feasible iterate.  Returns the (T, n) feasible iterate matrix.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    T, n = B.shape
    X = np.empty((T, n))
    x = np.asarray(x0, dtype=float).copy()
    for k in range(T):
        g = A @ x + B[k]
        x = np.clip(x - h * g, lower[k], upper[k])
        X[k] = x
    return X


def cb_run(F, G, row, A, B, lower, upper, x0, W0, rho, project):
    """Control-based solver over the horizon (CB, PCB or PCBW).

    The controller state W has one m-vector per coordinate, stored as an
    (m, n) array.  Each step drives W with the gradient at the previous
    feasible iterate (minus the anti-windup correction rho*(x' - x)),
    reads the new raw iterate off the gain row, and projects it when
    `project` is set.  Returns (X_raw, X_feas, W_final).
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    row = np.asarray(row, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    T, n = B.shape
    X_raw = np.empty((T, n))
    X_feas = np.empty((T, n))
    W = np.asarray(W0, dtype=float).copy()
    x_raw = np.asarray(x0, dtype=float).copy()
    if project:
        x_raw = np.clip(x_raw, lower[0], upper[0])
    x_feas = x_raw.copy()
    for k in range(T):
        g = A @ x_feas + B[k]
        drive = g - rho * (x_feas - x_raw) if rho != 0.0 else g
        W = F @ W + np.outer(G, drive)
        x_raw = row @ W
        x_feas = np.clip(x_raw, lower[k], upper[k]) if project else x_raw
        X_raw[k] = x_raw
        X_feas[k] = x_feas
    return X_raw, X_feas, W


def rls_update(d_hat, P, phi, target, alpha, reinit_delta):
    """One forgetting-factor RLS update with a scalar observation.

    Returns (d_new, P_new, a_posteriori_error, reinitialized).  The
    covariance is symmetrized after the rank-1 downdate; if it loses
    positive definiteness it is reset to reinit_delta * I and the flag is
    set.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    P = np.asarray(P, dtype=float)
    phi = np.asarray(phi, dtype=float)
    Pphi = P @ phi
    s = alpha + float(phi @ Pphi)
    innovation = target - float(phi @ d_hat)
    d_new = d_hat + (Pphi / s) * innovation
    P_new = (P - np.outer(Pphi, Pphi) / s) / alpha
    P_new = 0.5 * (P_new + P_new.T)
    reinitialized = 0
    try:
        np.linalg.cholesky(P_new)
    except np.linalg.LinAlgError:
        P_new = reinit_delta * np.eye(d_hat.size)
        reinitialized = 1
    a_post = abs(target - float(phi @ d_new))
    return d_new, P_new, a_post, reinitialized
