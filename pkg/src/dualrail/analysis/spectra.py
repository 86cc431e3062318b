"""Eigenvalues, structure predicates and Perron pairs of Metzler matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from ..errors import NoConvergence, NotIrreducible

#: Real parts with magnitude below this (1/s) are reported as marginal.
TOL_HURWITZ = 1e-12
BACKWARD_ERROR_TOL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by decreasing real part."""

    eigenvalues: np.ndarray
    backward_error: float

    @property
    def alpha(self) -> float:
        """Spectral abscissa."""
        return float(self.eigenvalues[0].real) if len(self.eigenvalues) else -np.inf

    @property
    def is_hurwitz(self) -> bool:
        return self.alpha < -TOL_HURWITZ

    @property
    def is_marginal(self) -> bool:
        return abs(self.alpha) <= TOL_HURWITZ

    @property
    def verdict(self) -> str:
        if self.is_hurwitz:
            return "hurwitz"
        return "marginal" if self.is_marginal else "unstable"

    def dominant(self, rtol: float = 1e-9) -> np.ndarray:
        """Eigenvalues whose real part equals the abscissa (e.g. a conjugate pair)."""
        ev = self.eigenvalues
        if not len(ev):
            return ev
        scale = max(abs(self.alpha), TOL_HURWITZ)
        return ev[np.abs(ev.real - self.alpha) <= rtol * scale + TOL_HURWITZ * 1e-3]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "verdict": self.verdict,
            "dominant": [_fmt_complex(z) for z in self.dominant()],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "backward_error": self.backward_error,
        }


def _fmt_complex(z: complex) -> str:
    if z.imag == 0:
        return f"{z.real:.6g}"
    sign = "+" if z.imag > 0 else "-"
    return f"{z.real:.6g}{sign}{abs(z.imag):.6g}j"


def eigenvalues(M) -> Spectrum:
    """All eigenvalues of a real square matrix, with a residual check.

    LAPACK's ``geev`` (Hessenberg reduction followed by Francis double-shift
    QR) does the work.  Every eigenpair is then checked for a normwise
    backward error ``|Mv - lv| / (|M| |v|)`` of at most 1e-10.  Badly scaled
    matrices can fail that check because ``geev`` balances by diagonal
    scaling; the eigenvalues are then read off a complex Schur form instead,
    whose backward error is ``|M - Z T Z^H| / |M|``.

    Raises
    ------
    NoConvergence
        LAPACK failed to converge or an eigenpair fails the residual check.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.size == 0:
        return Spectrum(np.zeros(0, dtype=complex), 0.0)
    try:
        lam, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"QR iteration failed: {exc}") from exc
    norm = np.linalg.norm(M, 2)
    if norm == 0.0:
        err = 0.0
    else:
        resid = np.linalg.norm(M @ V - V * lam, axis=0) / (norm * np.linalg.norm(V, axis=0))
        err = float(resid.max())
    if err > BACKWARD_ERROR_TOL:
        T, Z = schur(M, output="complex")
        lam = np.diag(T)
        err = float(np.linalg.norm(M - Z @ T @ Z.conj().T, 2) / norm)
    if err > BACKWARD_ERROR_TOL:
        raise NoConvergence(f"eigenpair backward error {err:.3g} exceeds {BACKWARD_ERROR_TOL}", residual=err)
    order = np.lexsort((-lam.imag, -lam.real))
    return Spectrum(lam[order].astype(complex), err)


def is_metzler(M, tol: float = 0.0) -> bool:
    M = np.asarray(M, dtype=float)
    off = M - np.diag(np.diag(M))
    return bool(np.all(off >= -tol))


def is_irreducible(M) -> bool:
    """True iff the digraph of non-zero off-diagonal entries is strongly connected.

    A 1x1 matrix counts as irreducible.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n <= 1:
        return True
    adj = (M != 0) & ~np.eye(n, dtype=bool)
    reach = adj | np.eye(n, dtype=bool)
    # repeated squaring of the reachability relation
    for _ in range(int(np.ceil(np.log2(n))) + 1):
        nxt = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    return bool(reach.all())


def is_lower_triangular_up_to_permutation(M) -> bool:
    """Reducible to lower-triangular form by a simultaneous permutation."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    adj = (M != 0) & ~np.eye(n, dtype=bool)
    remaining = set(range(n))
    # peel rows that depend on nothing still remaining
    while remaining:
        free = [j for j in remaining if not any(adj[j, i] for i in remaining)]
        if not free:
            return False
        remaining -= set(free)
    return True


def frobenius_perron(M) -> tuple[float, np.ndarray]:
    """Left Perron pair of an irreducible Metzler matrix.

    Returns ``(lam, w)`` with ``w > 0``, ``sum(w) == 1`` and
    ``w @ M == lam * w``; ``lam`` is the spectral abscissa.
    """
    M = np.asarray(M, dtype=float)
    if not is_metzler(M):
        raise NotIrreducible("matrix is not Metzler")
    if not is_irreducible(M):
        raise NotIrreducible("matrix is reducible")
    lam, V = np.linalg.eig(M.T)
    i = int(np.argmax(lam.real))
    w = V[:, i].real
    w = w * np.sign(w[np.argmax(np.abs(w))])
    w = w / w.sum()
    lam_f = float(lam[i].real)
    if not np.all(w > 0):
        raise NoConvergence("Perron vector is not strictly positive", last=w)
    return lam_f, w


def diagonal_lyapunov(M) -> np.ndarray | None:
    """Diagonal Lyapunov weights for a Metzler Hurwitz matrix.

    Returns ``d > 0`` such that ``M^T D + D M`` is negative definite, built
    from the positive vectors ``v = -M^{-1} 1`` and ``w = -M^{-T} 1`` as
    ``d = w / v``.  ``None`` when ``M`` is not Metzler Hurwitz.
    """
    M = np.asarray(M, dtype=float)
    if not is_metzler(M) or not eigenvalues(M).is_hurwitz:
        return None
    one = np.ones(M.shape[0])
    v = -np.linalg.solve(M, one)
    w = -np.linalg.solve(M.T, one)
    if not (np.all(v > 0) and np.all(w > 0)):
        return None
    d = w / v
    return d / d.max()


def lyapunov_matrix(M, d) -> np.ndarray:
    """``M^T D + D M`` for diagonal weights ``d``."""
    D = np.diag(d)
    return M.T @ D + D @ M
