"""
Pseudoinverse and quadratic forms of small symmetric PSD matrices

Everything goes through the dense symmetric eigendecomposition A = S D S^T
(LAPACK via numpy.linalg.eigh). Eigenvalues below rcond * lambda_max count
as zero, which is how tiny positive eigenvalues are told apart from exact
zeros; the cutoff used is returned with every result.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .configuration import LLBaseSettings
from .errors import InvalidArgumentError, NumericError

FINITE = "finite"
DIVERGENT = "divergent"


@dataclass
class PinvResult:
    pinv: np.ndarray
    rank: int
    eigenvalues: np.ndarray
    cutoff: float
    eigenvectors: np.ndarray

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis of range(A), one column per kept eigenvalue"""
        return self.eigenvectors[:, :self.rank]


@dataclass
class LimitClassification:
    kind: str
    value: Optional[float]
    range_residual: float
    rank: int
    cutoff: float

    @property
    def is_finite(self) -> bool:
        return self.kind == FINITE

    def AsDict(self) -> dict:
        return {
            'kind': self.kind,
            'value': self.value,
            'range_residual': self.range_residual,
            'rank': self.rank,
            'cutoff': self.cutoff,
        }


def _as_symmetric(A, tol: float = LLBaseSettings.SYMMETRY_TOL) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}", module="psdlinalg")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > tol * max(scale, np.finfo(float).tiny):
        raise InvalidArgumentError("matrix is not symmetric within tolerance", module="psdlinalg")
    return 0.5 * (A + A.T)


def _vector(x, dim: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise InvalidArgumentError(f"expected a vector of length {dim}, got shape {x.shape}", module="psdlinalg")
    return x


def eig_desc(A) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching eigenvectors (columns)"""
    A = _as_symmetric(A)
    try:
        w, v = np.linalg.eigh(A)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigensolver failed: {e}", module="psdlinalg") from e
    return w[::-1], v[:, ::-1]


def pseudoinverse(A, rcond: float = LLBaseSettings.RCOND) -> PinvResult:
    """
    Moore-Penrose pseudoinverse of a symmetric PSD matrix

    Args:
        A: Symmetric PSD matrix
        rcond: Relative cutoff in (0, 1); eigenvalues <= rcond*lambda_max are dropped

    Returns:
        PinvResult with pinv = S D+ S^T, rank, eigenvalues (descending) and the cutoff
    """
    if not 0.0 < rcond < 1.0:
        raise InvalidArgumentError(f"rcond must lie in (0,1), got {rcond}", module="psdlinalg")
    w, v = eig_desc(A)
    lam_max = max(float(w[0]), 0.0) if w.size else 0.0
    cutoff = rcond * lam_max
    large = w > cutoff
    rank = int(np.count_nonzero(large))
    vk = v[:, :rank]
    pinv = (vk / w[:rank]) @ vk.T
    pinv = 0.5 * (pinv + pinv.T)
    return PinvResult(pinv=pinv, rank=rank, eigenvalues=w, cutoff=cutoff, eigenvectors=v)


def weighted_norm_sq(x, G) -> float:
    """<x, G x>, with roundoff-sized negative values clamped to 0"""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    x = _vector(x, G.shape[0])
    if G.shape != (x.size, x.size):
        raise InvalidArgumentError(f"matrix shape {G.shape} does not match vector length {x.size}",
                                   module="psdlinalg")
    value = float(x @ G @ x)
    if value < 0.0:
        if -value <= 1e-12 * np.linalg.norm(G, 2) * float(x @ x):
            return 0.0
        raise InvalidArgumentError("quadratic form is negative; matrix is not PSD", module="psdlinalg")
    return value


def regularized_quadratic(A, x, beta: float) -> float:
    """<x, (A + beta I)^-1 x> from the eigendecomposition of A"""
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}", module="psdlinalg")
    w, v = eig_desc(A)
    x = _vector(x, w.size)
    y = v.T @ x
    return float(np.sum(y * y / (np.maximum(w, 0.0) + beta)))


def range_residual(result: PinvResult, x) -> float:
    """||A A+ x - x|| using the kept eigenvectors as the projector onto range(A)"""
    x = _vector(x, result.pinv.shape[0])
    basis = result.range_basis
    return float(np.linalg.norm(basis @ (basis.T @ x) - x))


def pinv_limit_classify(A, x, rcond: float = LLBaseSettings.RCOND,
                        rel_tol: float = LLBaseSettings.RANGE_REL_TOL,
                        result: PinvResult = None) -> LimitClassification:
    """
    Limit of <x,(A+beta I)^-1 x> as beta -> 0: ||x||^2_{A+} when A A+ x = x,
    divergent otherwise

    Args:
        A: Symmetric PSD matrix
        x: Vector
        rcond: Rank cutoff, as in pseudoinverse
        rel_tol: Range check tolerance relative to ||x||
        result: Precomputed pseudoinverse of A, if available

    Returns:
        LimitClassification
    """
    if result is None:
        result = pseudoinverse(A, rcond)
    x = _vector(x, result.pinv.shape[0])
    residual = range_residual(result, x)
    if residual <= rel_tol * float(np.linalg.norm(x)):
        return LimitClassification(kind=FINITE, value=weighted_norm_sq(x, result.pinv),
                                   range_residual=residual, rank=result.rank, cutoff=result.cutoff)
    return LimitClassification(kind=DIVERGENT, value=None, range_residual=residual,
                               rank=result.rank, cutoff=result.cutoff)
