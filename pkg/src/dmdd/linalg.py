"""Cholesky helpers for covariances of the form ``A diag(d) A^H + R``.

Working in the measurement domain keeps every solve at the N x N scale and
gives the coefficient-domain posterior quantities through the matrix
inversion lemma:

    Sigma_x = (A^H R^-1 A + diag(d)^-1)^-1
            = diag(d) - diag(d) A^H Sigma_y^-1 A diag(d)
    mu_x    = diag(d) A^H Sigma_y^-1 rhs

with ``Sigma_y = A diag(d) A^H + R``. Zero prior variances are handled
naturally (no diag(d) inversion ever happens).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import scipy.linalg as sla
from threadpoolctl import threadpool_limits

from .errors import FactorizationError


@contextmanager
def single_thread_blas():
    """Pin BLAS to one thread for factorization-heavy loops.

    On small cores the pthread handoff inside threaded BLAS costs more than
    the arithmetic for the moderate matrix sizes used here (up to ~1e3);
    large training GEMMs stay outside this guard.
    """
    with threadpool_limits(limits=1, user_api="blas"):
        yield


class DictionaryModel:
    """Caches a dictionary and its adjoint for repeated Gaussian solves."""

    def __init__(self, atoms: np.ndarray):
        self.atoms = np.ascontiguousarray(atoms, dtype=complex)
        self.adjoint = np.ascontiguousarray(self.atoms.conj().T)
        self.n_samples, self.n_atoms = self.atoms.shape

    def weighted_gram(self, prior_var: np.ndarray) -> np.ndarray:
        """``A diag(d) A^H`` built from the scaled factor, guaranteeing a
        Hermitian PSD result."""
        w = self.atoms * np.sqrt(np.maximum(prior_var, 0.0))
        return w @ w.conj().T


def _chol_with_jitter(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a trace-scaled jitter."""
    try:
        return sla.cholesky(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[0]
    jitter = 1e-8 * max(np.trace(mat).real / n, np.finfo(float).tiny)
    try:
        return sla.cholesky(
            mat + jitter * np.eye(n), lower=True, check_finite=False
        )
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance is not positive definite") from exc


class MarginalFactor:
    """Cholesky factor of ``A diag(d) A^H + R`` with posterior helpers.

    ``noise`` may be a scalar (white noise power) or a dense N x N
    covariance. The weighted Gram matrix may be passed in when the caller
    reuses it across several noise levels.
    """

    def __init__(
        self,
        model: DictionaryModel,
        prior_var: np.ndarray,
        noise: float | np.ndarray,
        gram: np.ndarray | None = None,
    ):
        self.model = model
        self.prior_var = np.asarray(prior_var, dtype=float)
        n = model.n_samples
        # own a scratch copy so the noise can be folded in on the diagonal
        cov = model.weighted_gram(self.prior_var) if gram is None else gram.copy()
        if np.isscalar(noise) or np.ndim(noise) == 0:
            cov.flat[:: n + 1] += float(noise)
        else:
            cov += np.asarray(noise)
        self.chol = _chol_with_jitter(cov)
        self._whitened_atoms: np.ndarray | None = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """``Sigma_y^{-1} rhs`` for a vector or a stack of columns."""
        return sla.cho_solve((self.chol, True), rhs, check_finite=False)

    def whiten(self, rhs: np.ndarray) -> np.ndarray:
        """``L^{-1} rhs``; squared column norms are Gaussian exponents."""
        return sla.solve_triangular(self.chol, rhs, lower=True, check_finite=False)

    def quad(self, rhs: np.ndarray) -> np.ndarray:
        """``r^H Sigma_y^{-1} r`` per column of ``rhs``."""
        w = self.whiten(rhs)
        if w.ndim == 1:
            return np.sum(w.real**2 + w.imag**2)
        return np.sum(w.real**2 + w.imag**2, axis=0)

    def posterior_mean(self, rhs: np.ndarray) -> np.ndarray:
        """``diag(d) A^H Sigma_y^{-1} rhs`` per column."""
        sol = self.solve(rhs)
        proj = self.model.adjoint @ sol
        if proj.ndim == 1:
            return self.prior_var * proj
        return self.prior_var[:, None] * proj

    def _atoms_whitened(self) -> np.ndarray:
        if self._whitened_atoms is None:
            self._whitened_atoms = self.whiten(self.model.atoms)
        return self._whitened_atoms

    def gram_inv_diag(self) -> np.ndarray:
        """``diag(A^H Sigma_y^{-1} A)``; real and nonnegative."""
        v = self._atoms_whitened()
        return np.einsum("ij,ij->j", v.real, v.real) + np.einsum(
            "ij,ij->j", v.imag, v.imag
        )

    def posterior_var_diag(self) -> np.ndarray:
        """Diagonal of the coefficient posterior covariance."""
        d = self.prior_var
        out = d - d * d * self.gram_inv_diag()
        return np.maximum(out, 0.0)

    def trace_inv(self) -> float:
        """``tr(Sigma_y^{-1})`` via the inverted triangular factor."""
        (trtri,) = sla.get_lapack_funcs(("trtri",), (self.chol,))
        # always hand LAPACK its own copy; overwrite_c must never touch chol
        scratch = np.array(self.chol, order="F")
        inv, info = trtri(scratch, lower=1, overwrite_c=1)
        if info != 0:
            raise FactorizationError("triangular inversion failed")
        return float(np.sum(inv.real**2 + inv.imag**2))
