"""Field-generic dense linear algebra primitives.

Everything in this module works on plain NumPy arrays and treats the
real/complex distinction as semantic: real inputs stay real, complex inputs
stay complex, and nothing silently promotes. The routines here back the rest
of the package: Moore-Penrose pseudo-inverses with explicit rank tolerances,
orthogonal projectors, null-space bases, and the mapping between a complex
parameter vector and its stacked real representation
``theta_R = [Re(theta); Im(theta)]``.

Rank decisions use a relative threshold ``tol * sigma_max``. The default
``tol = max(rows, cols) * eps`` mirrors the usual SVD cutoff; callers that
know the spectral gap of their problem can tighten or loosen it per call.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SingularFimError",
    "pseudo_inverse",
    "projector",
    "complement_projector",
    "null_space_basis",
    "range_basis",
    "numerical_rank",
    "hermitian_nullity",
    "real_complex_map",
    "realify_vector",
    "complexify_vector",
    "realify_fim",
    "trace_crb_complex",
    "principal_angle",
    "subspace_distance",
]

_EPS = np.finfo(np.float64).eps


class SingularFimError(np.linalg.LinAlgError):
    """Raised when a Fisher-information-like matrix that must be inverted is singular."""


def _as_matrix(A, name="A"):
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _default_tol(A):
    return max(A.shape) * _EPS


def pseudo_inverse(A, tol=None):
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff.

    Parameters
    ----------
    A : (m, n) array_like
        Real or complex matrix with finite entries.
    tol : float, optional
        Singular values below ``tol * sigma_max`` are treated as zero.
        Defaults to ``max(m, n) * eps``.

    Returns
    -------
    (n, m) ndarray
        ``A^+`` satisfying the four Moore-Penrose identities up to
        roundoff at the given tolerance.
    """
    A = _as_matrix(A)
    if tol is None:
        tol = _default_tol(A)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], A.shape[0]), dtype=A.dtype)
    s_inv = np.where(s > tol * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (Vh.conj().T * s_inv) @ U.conj().T


def numerical_rank(A, tol=None):
    """Rank of ``A`` counted as singular values above ``tol * sigma_max``."""
    A = _as_matrix(A)
    if tol is None:
        tol = _default_tol(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def projector(X):
    """Orthogonal projector ``P = X (X^H X)^+ X^H`` onto ``range(X)``.

    ``X`` may be rank deficient; the pseudo-inverse handles collinear
    columns. The result is Hermitian and idempotent up to roundoff.
    """
    X = _as_matrix(X, "X")
    if X.shape[1] < 1:
        raise ValueError("X must have at least one column")
    Q = range_basis(X)
    return Q @ Q.conj().T


def complement_projector(X):
    """Projector onto the orthogonal complement of ``range(X)``: ``I - P_X``."""
    P = projector(X)
    return np.eye(P.shape[0], dtype=P.dtype) - P


def range_basis(X, tol=None):
    """Orthonormal basis of ``range(X)`` (columns), via SVD at tolerance ``tol``."""
    X = _as_matrix(X, "X")
    if tol is None:
        tol = _default_tol(X)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((X.shape[0], 0), dtype=X.dtype)
    r = int(np.count_nonzero(s > tol * s[0]))
    return U[:, :r]


def null_space_basis(A, tol=None):
    """Orthonormal basis of the numerical null space of ``A``.

    Columns span ``{x : ||A x|| <= tol * ||A|| * ||x||}``; the column count is
    ``n - rank(A)``. An all-zero matrix returns the identity (any orthonormal
    basis of the full space is valid; compare spans, not entries).
    """
    A = _as_matrix(A)
    if tol is None:
        tol = _default_tol(A)
    _, s, Vh = np.linalg.svd(A)
    n = A.shape[1]
    if s.size == 0 or s[0] == 0.0:
        return np.eye(n, dtype=A.dtype)
    r = int(np.count_nonzero(s > tol * s[0]))
    return Vh[r:].conj().T


def hermitian_nullity(J, tol=1e-8):
    """(rank, nullity, eigvals, eigvecs) of a Hermitian PSD matrix.

    Eigenvalues at or below ``tol * lambda_max`` count as zero. Used for
    Fisher-information rank decisions where the true null eigenvalues sit
    many orders below the smallest genuine one.
    """
    J = _as_matrix(J, "J")
    w, V = np.linalg.eigh(J)
    wmax = float(w.max()) if w.size else 0.0
    if wmax <= 0.0:
        return 0, J.shape[0], w, V
    nullity = int(np.count_nonzero(w <= tol * wmax))
    return J.shape[0] - nullity, nullity, w, V


def real_complex_map(n):
    """The 2n x 2n matrix ``M`` with ``theta_R = M [theta; theta^*]``.

    Block structure ``M = (1/2) [[I, I], [-jI, jI]]``; satisfies
    ``M M^H = (1/2) I``.
    """
    I = np.eye(n)
    return 0.5 * np.block([[I, I], [-1j * I, 1j * I]])


def realify_vector(z):
    """Stack a complex vector as ``[Re(z); Im(z)]`` (real vectors pass through)."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return np.concatenate([z.real, z.imag])
    return z.astype(np.float64, copy=True)


def complexify_vector(x):
    """Inverse of :func:`realify_vector` for an even-length real vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.size % 2:
        raise ValueError("length must be even to fold into a complex vector")
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def _check_fim_pair(J, J_cross):
    J = _as_matrix(J, "J")
    if J.shape[0] != J.shape[1]:
        raise ValueError("J must be square")
    if J_cross is None:
        J_cross = np.zeros_like(J, dtype=complex)
    else:
        J_cross = _as_matrix(J_cross, "J_cross")
        if J_cross.shape != J.shape:
            raise ValueError(
                f"cross matrix shape {J_cross.shape} does not match J shape {J.shape}"
            )
    return np.asarray(J, dtype=complex), np.asarray(J_cross, dtype=complex)


def realify_fim(J, J_cross=None):
    """Real-representation FIM for ``theta_R = [Re(theta); Im(theta)]``.

    Given the complex information matrices ``J`` (Hermitian) and ``J_cross``
    (symmetric; zero when absent), assembles the two-block sum

    ``2 [[Re J, -Im J], [Im J, Re J]] + 2 [[Re Jc, Im Jc], [Im Jc, -Re Jc]]``

    which is the exact Fisher information of the stacked real parameters:
    it reproduces the empirical score covariance (see the simulation module's
    estimator). The output is real symmetric.
    """
    J, Jc = _check_fim_pair(J, J_cross)
    top = np.block([[J.real, -J.imag], [J.imag, J.real]])
    cross = np.block([[Jc.real, Jc.imag], [Jc.imag, -Jc.real]])
    out = 2.0 * top + 2.0 * cross
    return 0.5 * (out + out.T)


def trace_crb_complex(J, J_cross=None):
    """Mean-squared-error lower bound ``4 tr((J - Jc J^{-*} Jc^*)^{-1})``.

    The inner matrix is the Schur complement of the stacked
    ``[[J, Jc], [Jc^*, J^*]]`` block matrix; the returned value equals
    ``4 tr(F^{-1})`` where ``F`` is the two-block-sum real representation
    produced by :func:`realify_fim`.

    Raises
    ------
    SingularFimError
        If the Schur-complement matrix is numerically singular.
    """
    J, Jc = _check_fim_pair(J, J_cross)
    n = J.shape[0]
    if np.linalg.norm(Jc) == 0.0:
        S = J
    else:
        S = J - Jc @ np.linalg.solve(J.conj(), Jc.conj())
    if numerical_rank(S) < n:
        raise SingularFimError("Schur-complement information matrix is singular")
    return float(4.0 * np.trace(np.linalg.inv(S)).real)


def principal_angle(v, basis):
    """Principal angle (radians) between vector ``v`` and ``span(basis)``.

    ``basis`` must have orthonormal columns. Returns ``pi/2`` when the basis
    is empty.
    """
    v = np.asarray(v).ravel()
    B = np.asarray(basis)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("cannot measure the angle of a zero vector")
    if B.ndim != 2 or B.shape[1] == 0:
        return float(np.pi / 2)
    # sine form: well conditioned near zero, where match decisions are made
    resid = v / nv - B @ (B.conj().T @ (v / nv))
    return float(np.arcsin(min(1.0, np.linalg.norm(resid))))


def subspace_distance(B1, B2):
    """Spectral-norm distance between the projectors onto two column spans."""
    P1 = projector(np.asarray(B1))
    P2 = projector(np.asarray(B2))
    return float(np.linalg.norm(P1 - P2, ord=2))
