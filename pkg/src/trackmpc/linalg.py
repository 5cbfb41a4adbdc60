"""Dense linear-algebra kernel.

Small, deterministic routines used throughout synthesis: elimination,
one-sided Jacobi SVD, Cholesky, the Kronecker-form discrete Lyapunov solver
and closed forms for 2x2 matrix exponentials and eigendecompositions.
Complex arithmetic never leaves the 2x2 routines.
"""

import math

import numpy as np

from .errors import DefectiveBlock, NoConvergence, NotPositiveDefinite, NotSchur, SingularMatrix

RANK_TOL = 1e-9


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def solve_linear(A, b):
    """Solve ``A X = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a column stack; the result has the same shape.
    Raises SingularMatrix when a pivot drops below ``1e-12 * max|A|``.
    """
    A = _as_matrix(A)
    b_arr = np.asarray(b, dtype=float)
    vector = b_arr.ndim == 1
    B = _as_matrix(b_arr)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"solve_linear needs a square matrix, got {A.shape}")
    if B.shape[0] != n:
        raise ValueError("right-hand side row count does not match")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if n and scale == 0.0:
        raise SingularMatrix("zero matrix")
    thresh = 1e-12 * scale
    W = np.hstack([A.copy(), B.copy()])
    for k in range(n):
        p = k + int(np.argmax(np.abs(W[k:, k])))
        if abs(W[p, k]) <= thresh:
            raise SingularMatrix(f"pivot {abs(W[p, k]):.3e} at column {k}")
        if p != k:
            W[[k, p]] = W[[p, k]]
        f = W[k + 1:, k] / W[k, k]
        W[k + 1:, k:] -= np.outer(f, W[k, k:])
    X = np.zeros_like(B)
    U = W[:, :n]
    Y = W[:, n:]
    for k in range(n - 1, -1, -1):
        X[k] = (Y[k] - U[k, k + 1:] @ X[k + 1:]) / U[k, k]
    return X.ravel() if vector else X


def svd(M, tol=1e-12, max_sweeps=100):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``U, sigma, V`` with ``M ~= U @ diag(sigma) @ V.T`` and sigma
    sorted in descending order.
    """
    M = _as_matrix(M)
    m, n = M.shape
    if m < n:
        V, s, U = svd(M.T, tol, max_sweeps)
        return U, s, V
    U = M.copy()
    V = np.eye(n)
    if n == 0:
        return U, np.zeros(0), V
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui = U[:, i]
                uj = U[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                Ui = U[:, i].copy()
                U[:, i] = c * Ui - s * U[:, j]
                U[:, j] = s * Ui + c * U[:, j]
                Vi = V[:, i].copy()
                V[:, i] = c * Vi - s * V[:, j]
                V[:, j] = s * Vi + c * V[:, j]
        if not rotated:
            break
    else:
        raise NoConvergence(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    sigma = np.sqrt(np.sum(U * U, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    U = U[:, order]
    V = V[:, order]
    nz = sigma > 0
    U[:, nz] = U[:, nz] / sigma[nz]
    return U, sigma, V


def real_embedding(M):
    """``[[Re, -Im], [Im, Re]]``; rank of the embedding is twice the complex rank."""
    M = np.asarray(M)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def rank(M, tol=RANK_TOL):
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = np.asarray(M)
    if np.iscomplexobj(M):
        return rank(real_embedding(M), tol) // 2
    _, s, _ = svd(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def cholesky(M):
    """Lower-triangular Cholesky factor; raises NotPositiveDefinite on failure."""
    M = _as_matrix(M)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("cholesky needs a square matrix")
    if n == 0:
        return M.copy()
    if np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise NotPositiveDefinite("matrix is not symmetric")
    floor = 1e-12 * abs(np.trace(M)) / n
    L = np.zeros_like(M)
    for j in range(n):
        d = M[j, j] - L[j, :j] @ L[j, :j]
        if d <= floor:
            raise NotPositiveDefinite(f"pivot {d:.3e} at index {j}")
        L[j, j] = math.sqrt(d)
        L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(M):
    try:
        cholesky(M)
    except NotPositiveDefinite:
        return False
    return True


def dlyap(Acl, Q):
    """Solve ``Acl' P Acl - P + Q = 0`` through the vectorized linear system.

    The Cholesky certificate on the result doubles as the Schur test for
    ``Acl``: a positive definite solution with ``Q > 0`` exists only if
    ``Acl`` is Schur.
    """
    Acl = _as_matrix(Acl)
    Q = _as_matrix(Q)
    n = Acl.shape[0]
    if Acl.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("dlyap dimension mismatch")
    cholesky(Q)
    At = Acl.T
    lhs = np.eye(n * n) - np.kron(At, At)
    try:
        vecP = solve_linear(lhs, Q.reshape(-1, order="F"))
    except SingularMatrix as exc:
        raise NotSchur(f"Lyapunov system singular: {exc}") from None
    P = symmetrize(vecP.reshape((n, n), order="F"))
    try:
        cholesky(P)
    except NotPositiveDefinite:
        raise NotSchur("Lyapunov solution is not positive definite") from None
    return P


def lyapunov_residual(Acl, P, Q):
    return np.linalg.norm(Acl.T @ P @ Acl - P + Q)


def expm2(Mc, dt=1.0):
    """Exponential of ``Mc * dt`` for a real 2x2 matrix via Cayley-Hamilton."""
    M = _as_matrix(Mc) * dt
    if M.shape != (2, 2):
        raise ValueError("expm2 needs a 2x2 matrix")
    a = 0.5 * (M[0, 0] + M[1, 1])
    N = M - a * np.eye(2)
    # N @ N = delta * I for a trace-free 2x2
    delta = -(N[0, 0] * N[1, 1] - N[0, 1] * N[1, 0])
    if delta > 0:
        w = math.sqrt(delta)
        core = math.cosh(w) * np.eye(2) + (math.sinh(w) / w) * N
    elif delta < 0:
        w = math.sqrt(-delta)
        core = math.cos(w) * np.eye(2) + (math.sin(w) / w) * N
    else:
        core = np.eye(2) + N
    return math.exp(a) * core


def eig2(M, tol=1e-12):
    """Eigenvalues and unit eigenvectors of a real 2x2 matrix.

    Returns ``(lam1, lam2, E)`` with Python complex eigenvalues and the
    eigenvectors as the columns of the complex array ``E``. For a complex
    pair the second eigenvalue/eigenvector is the conjugate of the first.
    """
    M = _as_matrix(M)
    if M.shape != (2, 2):
        raise ValueError("eig2 needs a 2x2 matrix")
    a = 0.5 * (M[0, 0] + M[1, 1])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    disc = a * a - det
    scale = max(1.0, np.max(np.abs(M)))
    if disc < -tol * scale * scale:
        w = math.sqrt(-disc)
        lam = complex(a, w)
        v = _null_vector(M, lam)
        E = np.column_stack([v, v.conj()])
        return lam, lam.conjugate(), E
    if disc > tol * scale * scale:
        w = math.sqrt(disc)
        lams = (a + w, a - w)
        E = np.column_stack([_null_vector(M, complex(l)) for l in lams])
        return complex(lams[0]), complex(lams[1]), E
    lam = complex(a)
    if np.max(np.abs(M - a * np.eye(2))) > math.sqrt(tol) * scale:
        raise DefectiveBlock("repeated eigenvalue with a single eigenvector")
    return lam, lam, np.eye(2, dtype=complex)


def _null_vector(M, lam):
    R = M - lam * np.eye(2)
    # pick the better-conditioned row of (M - lam I)
    if abs(R[0, 0]) + abs(R[0, 1]) >= abs(R[1, 0]) + abs(R[1, 1]):
        v = np.array([R[0, 1], -R[0, 0]], dtype=complex)
    else:
        v = np.array([R[1, 1], -R[1, 0]], dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        v = np.array([1.0, 0.0], dtype=complex)
        nrm = 1.0
    return v / nrm
