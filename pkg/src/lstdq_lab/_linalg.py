"""Dense linear-algebra helpers shared by the estimator and coverage code."""

import numpy as np

#: A matrix is treated as singular when sigma_min <= SINGULAR_RTOL * sigma_max.
SINGULAR_RTOL = 1e-10
#: Eigenvalues of PSD matrices are floored at EIG_FLOOR * lambda_max before inversion.
EIG_FLOOR = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an operation needs an invertible matrix and gets a singular one."""


def singular_values(mat):
    return np.linalg.svd(np.atleast_2d(mat), compute_uv=False)


def sigma_min(mat):
    return float(singular_values(mat)[-1])


def sigma_max(mat):
    return float(singular_values(mat)[0])


def is_singular(mat, rtol=SINGULAR_RTOL):
    """Relative singularity test ``sigma_min <= rtol * sigma_max``.

    The zero matrix is singular.
    """
    s = singular_values(mat)
    return bool(s[0] == 0.0 or s[-1] <= rtol * s[0])


def sym_eig(sym):
    """Eigendecomposition of the symmetric part of ``sym`` (ascending)."""
    sym = 0.5 * (sym + sym.T)
    return np.linalg.eigh(sym)


def _floored_eig(sym):
    w, v = sym_eig(sym)
    top = max(float(w[-1]), 0.0)
    if top == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    return np.maximum(w, EIG_FLOOR * top), v


def sym_sqrt(sym):
    w, v = _floored_eig(sym)
    return (v * np.sqrt(w)) @ v.T


def sym_inv_sqrt(sym):
    w, v = _floored_eig(sym)
    return (v / np.sqrt(w)) @ v.T


def spectral_radius(mat):
    """Largest eigenvalue modulus, from the full nonsymmetric eigensolver."""
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def lstsq_residual(basis, target):
    """Least-squares fit of ``target`` on the columns of ``basis``.

    Returns ``(coef, residual)`` where ``residual`` is the max-norm of the
    fitted residual.  ``coef`` is the minimum-norm solution.
    """
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = target - basis @ coef
    return coef, float(np.max(np.abs(resid))) if resid.size else 0.0
