"""Topological Dirac operator with mass term, and a cyclic Jacobi eigensolver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, incidence


class NumericFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DiracOperator:
    matrix: np.ndarray
    b: float
    beta: float
    n_nodes: int
    n_edges: int


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns; node block stacked above edge block


@dataclass(frozen=True)
class SpectralReport:
    pos_count: int
    neg_count: int
    zero_count: int
    min_abs_nonkernel: float
    gap_holds: bool


def assemble(g: Graph, b: float = 1.0, beta: float = 0.0) -> DiracOperator:
    """Block matrix [[beta I, b B], [b B^T, -beta I]] on nodes (+) undirected edges."""
    n, m = g.num_nodes, g.num_edges
    bmat = incidence(g).toarray()
    op = np.zeros((n + m, n + m))
    op[:n, n:] = b * bmat
    op[n:, :n] = b * bmat.T
    op[:n, :n] = beta * np.eye(n)
    op[n:, n:] = -beta * np.eye(m)
    return DiracOperator(op, float(b), float(beta), n, m)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100, max_size: int = 512):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Converges when the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||a||_F)``. Returns ascending eigenvalues and the matching
    orthonormal eigenvector columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if n > max_size:
        raise ValueError(f"matrix size {n} exceeds cap {max_size}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))

    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    # rotations below this size cannot move the off-diagonal norm past tol
    negligible = 1e-6 * tol * scale

    def off_norm():
        # summed directly; ||A||^2 - ||diag||^2 cancels to ~sqrt(eps) * ||A||
        return np.sqrt(2.0 * np.sum(a[upper] ** 2))

    for _ in range(max_sweeps):
        if off_norm() < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < negligible:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p, q) plane rotation
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        if off_norm() >= tol * scale:
            raise NumericFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigendecompose(op: DiracOperator | np.ndarray, **kwargs) -> Spectrum:
    mat = op.matrix if isinstance(op, DiracOperator) else op
    w, v = jacobi_eigh(mat, **kwargs)
    return Spectrum(w, v)


def verify_spectral_claims(spec: Spectrum, beta: float, n_nodes: int, n_edges: int,
                           zero_tol: float = 1e-9) -> SpectralReport:
    """Count signs and check the mass gap ``min |lambda| >= |beta|``.

    With ``beta == 0`` the kernel modes (``|lambda| < zero_tol``) are
    excluded from the signed counts and from the minimum.
    """
    lam = np.asarray(spec.eigenvalues)
    if lam.size != n_nodes + n_edges:
        raise ValueError(f"spectrum has {lam.size} values, expected {n_nodes + n_edges}")
    absl = np.abs(lam)
    if beta == 0.0:
        nonkernel = absl >= zero_tol
    else:
        nonkernel = np.ones_like(absl, dtype=bool)
    pos = int(np.sum((lam > 0) & nonkernel))
    neg = int(np.sum((lam < 0) & nonkernel))
    zero = int(lam.size - pos - neg)
    min_abs = float(absl[nonkernel].min()) if nonkernel.any() else 0.0
    gap = bool(absl.min() >= abs(beta) - zero_tol)
    return SpectralReport(pos, neg, zero, min_abs, gap)


def residuals(op: DiracOperator | np.ndarray, spec: Spectrum) -> np.ndarray:
    """Per-pair ``||A v - lambda v||``."""
    mat = op.matrix if isinstance(op, DiracOperator) else op
    r = mat @ spec.eigenvectors - spec.eigenvectors * spec.eigenvalues
    return np.linalg.norm(r, axis=0)
