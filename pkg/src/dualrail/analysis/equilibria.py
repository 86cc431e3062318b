"""Equilibria of the quadratic positive dynamics and their linearization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..crn import Crn, StructuredSystem, VectorField, extract_structure, mass_action_field
from ..errors import NoConvergence, NotIrreducible
from .spectra import frobenius_perron, is_irreducible

log = logging.getLogger(__name__)

#: Components at or below this are treated as zero when classifying (nM).
ZERO_TOL = 1e-9
#: Residual accepted by :func:`equilibrium_full` (nM/s).
TOL_EQ = 1e-12
#: A pre-integration that grows past this (nM) is abandoned as a seed.
TAIL_CAP = 1e3

ORIGIN = "origin"
POSITIVE = "positive"
MIXED = "mixed-invalid"


@dataclass
class EquilibriumResult:
    """Equilibrium with its residual certificate.

    ``residual`` is the infinity norm of the right-hand side at ``x_star``.
    ``details`` records how each seed fared.
    """

    x_star: np.ndarray
    residual: float
    classification: str
    converged: bool
    iterations: int = 0
    seed: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "residual": self.residual,
            "classification": self.classification,
            "converged": self.converged,
            "iterations": self.iterations,
            "seed": self.seed,
        }


def classify(x, tol: float = ZERO_TOL) -> str:
    x = np.asarray(x, dtype=float)
    nonzero = x > tol
    if not nonzero.any():
        return ORIGIN
    return POSITIVE if nonzero.all() else MIXED


def _root_map(M: np.ndarray, k: float, v: np.ndarray):
    m = np.abs(np.diag(M))
    off = M - np.diag(np.diag(M))

    def f(q):
        s = np.maximum(off @ q + v, 0.0)
        # stable form of (-|m| + sqrt(m^2 + 4ks)) / 2k; zero drive gives zero
        den = m + np.sqrt(m * m + 4 * k * s)
        return np.divide(2 * s, den, out=np.zeros_like(s), where=den > 0)

    return f


def equilibrium_q(
    M,
    k: float,
    v=None,
    *,
    seed=None,
    max_iter: int = 1_000_000,
    tol: float = 1e-12,
) -> EquilibriumResult:
    """Equilibrium of ``q' = M q - k q o q + v`` by fixed-point iteration.

    Each sweep replaces every ``q_j`` by the non-negative root of
    ``k q_j^2 + |m_jj| q_j - (sum_{i != j} m_ji q_i + v_j) = 0``.  For a
    Metzler ``M`` this map is monotone, so iterating from a point the map
    does not increase converges downwards to the largest equilibrium below
    it.  Every 50 sweeps a Newton polish is tried and kept once it passes
    the same stopping test, which matters near the existence boundary where
    the sweeps contract slowly.

    Without an explicit ``seed`` the search starts from ``(lam_F / k) 1``
    when ``M`` is irreducible with a positive Perron root, and from the
    origin otherwise.  A seed that the map would push upwards is doubled
    until it is not, so the positive branch is never missed.  Iterates that
    oscillate are damped by a factor 0.5.

    Raises
    ------
    NoConvergence
        ``max_iter`` sweeps without ``|dq|_inf < tol max(1, |q|_inf)``.
    """
    M = np.asarray(M, dtype=float)
    if not k > 0:
        raise ValueError("k must be positive")
    n = M.shape[0]
    v = np.zeros(n) if v is None else np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("v must be non-negative")
    f = _root_map(M, k, v)
    if seed is None:
        q = np.zeros(n)
        label = ORIGIN
        lam = None
        if n and is_irreducible(M):
            try:
                lam, _ = frobenius_perron(M)
            except (NotIrreducible, NoConvergence):
                lam = None
        if lam is not None and lam > 0:
            q = np.full(n, lam / k)
            label = "perron"
        elif v.any():
            q = f(q)
            label = "forced"
    else:
        q = np.array(seed, dtype=float)
        label = "given"
    if q.any():
        for _ in range(200):
            if np.all(f(q) <= q):
                break
            q = 2 * q
    def settled(q, dq, step=1.0):
        return np.max(np.abs(dq), initial=0.0) * step < tol * max(1.0, np.max(np.abs(q), initial=0.0))

    step = 1.0
    prev = None
    for it in range(1, max_iter + 1):
        dq = f(q) - q
        if prev is not None and np.dot(dq, prev) < 0:
            step = max(step * 0.5, 1e-3)
        q = q + step * dq
        prev = dq
        if settled(q, dq, step):
            q, resid = _polish(M, k, v, q)
            return EquilibriumResult(q, resid, classify(q), True, it, label)
        if it % 50 == 0 and q.any():
            # near a bifurcation the sweeps contract slowly; Newton finishes the job
            qn, resid = _polish(M, k, v, q)
            # iterates sit above the equilibrium they descend to, so a polish
            # that stays positive and below the iterate found that same point
            below = np.all(qn <= q * (1 + 1e-9))
            if below and np.all(qn > 0) and settled(qn, f(qn) - qn):
                return EquilibriumResult(qn, resid, classify(qn), True, it, label)
    resid = M @ q - k * q * q + v
    raise NoConvergence(
        f"fixed-point iteration did not converge in {max_iter} sweeps",
        last=q,
        residual=float(np.max(np.abs(resid))),
    )


def _polish(M, k, v, q, steps: int = 20):
    """Newton steps on ``M q - k q o q + v``; slow contraction near a
    bifurcation leaves the fixed-point iterate short of round-off."""
    F = M @ q - k * q * q + v
    norm = float(np.max(np.abs(F), initial=0.0))
    if not q.any():
        return q, norm
    for _ in range(steps):
        try:
            trial = q - np.linalg.solve(M - 2 * k * np.diag(q), F)
        except np.linalg.LinAlgError:
            break
        Ft = M @ trial - k * trial * trial + v
        nt = float(np.max(np.abs(Ft)))
        if np.any(trial < 0) or not nt < norm:
            break
        q, F, norm = trial, Ft, nt
    return q, norm


def descartes_condition(d1: float, d2: float, c1: float, c2: float) -> bool:
    """Existence of a positive unforced equilibrium for the two-state loop.

    Descartes' rule of signs on the equilibrium quartic gives exactly one
    positive root when ``c1 c2 > d1 d2`` and none otherwise.
    """
    for name, val in (("d1", d1), ("d2", d2), ("c1", c1), ("c2", c2)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return c1 * c2 > d1 * d2


def _as_field(model) -> VectorField:
    if isinstance(model, VectorField):
        return model
    if isinstance(model, StructuredSystem):
        return model.field()
    if isinstance(model, Crn):
        return mass_action_field(model)
    raise TypeError(f"cannot build a vector field from {type(model).__name__}")


def _newton(fld: VectorField, x0: np.ndarray, r: np.ndarray, tol: float, max_iter: int = 200):
    """Damped Newton with backtracking on the residual norm, kept in x >= 0."""
    x = np.maximum(np.asarray(x0, dtype=float), 0.0)
    F = fld(x, r)
    norm = np.max(np.abs(F))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return x, norm, it - 1, True
        J = fld.jacobian(x)
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -F, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            trial = np.maximum(x + t * dx, 0.0)
            Ft = fld(trial, r)
            nt = np.max(np.abs(Ft))
            if nt < norm or nt <= tol:
                break
            t *= 0.5
        else:
            return x, norm, it, False
        x, F, norm = trial, Ft, nt
    return x, norm, max_iter, norm <= tol


def equilibrium_full(
    crn,
    r=(0.0, 0.0),
    *,
    tol: float = TOL_EQ,
    tail_time: float = 2e6,
    extra_seeds=(),
) -> EquilibriumResult:
    """Non-negative equilibrium of the full dual-rail dynamics.

    Damped Newton on ``A x + B r - eta (P x) o x`` with Jacobian
    ``A + eta J{x}`` is started from several seeds:

    * the origin;
    * for ``r = 0``, the positive branch of the rotated unforced dynamics
      lifted back as ``x+ = x- = q / 2``;
    * only when neither gives a positive point, the tail of a stiff
      pre-integration from every rail at 1 nM.

    A converged positive equilibrium is preferred over the origin, since
    the origin is unstable whenever both coexist.  ``details`` reports
    every seed's outcome.

    Raises
    ------
    NoConvergence
        No seed reached a non-negative point with residual below ``tol``.
    """
    fld = _as_field(crn)
    r = np.asarray(r, dtype=float)
    n2 = fld.A.shape[0]
    scale = max(1.0, float(np.abs(fld.A).max()))
    atol = tol * scale
    seeds: list[tuple[str, np.ndarray]] = [("origin", np.zeros(n2))]
    if not r.any():
        S = extract_structure_from_field(fld)
        try:
            qres = equilibrium_q(S.q_matrix(), fld.eta / 2)
            if qres.classification == POSITIVE:
                seeds.append(("q-branch", np.concatenate([qres.x_star, qres.x_star]) / 2))
        except NoConvergence as exc:
            log.debug("q-branch seed failed: %s", exc)
    for i, s in enumerate(extra_seeds):
        seeds.append((f"extra{i}", np.asarray(s, dtype=float)))

    details = {}
    found: list[EquilibriumResult] = []

    def attempt(label, x0):
        x, res, its, ok = _newton(fld, x0, r, atol)
        cls = classify(x)
        details[label] = {"converged": bool(ok), "residual": float(res), "classification": cls, "iterations": its}
        if ok:
            found.append(EquilibriumResult(x, float(res), cls, True, its, label))

    for label, x0 in seeds:
        attempt(label, x0)
    if not any(e.classification == POSITIVE for e in found):
        tail = _tail_seed(fld, r, tail_time)
        if tail is not None:
            attempt("tail", tail)
    if not found:
        best = min(details, key=lambda k: details[k]["residual"])
        raise NoConvergence("no seed converged to an equilibrium", residual=details[best]["residual"], details=details)
    positive = [e for e in found if e.classification == POSITIVE]
    chosen = positive[0] if positive else found[0]
    if len(positive) > 1:
        spread = max(np.max(np.abs(e.x_star - chosen.x_star)) for e in positive)
        details["positive_spread"] = float(spread)
    chosen.details = details
    return chosen


def _tail_seed(fld: VectorField, r: np.ndarray, tail_time: float):
    from ..sim import ReferenceProfile, integrate

    try:
        traj = integrate(
            fld,
            np.ones(fld.A.shape[0]),
            ReferenceProfile.constant(*r),
            tail_time,
            method="LSODA",
            rtol=1e-10,
            atol=1e-12,
            t_eval=np.array([tail_time]),
            divergence=TAIL_CAP,
        )
    except Exception as exc:  # the tail is only a seed
        log.debug("pre-integration seed failed: %s", exc)
        return None
    return None if traj.diverged else traj.final


def extract_structure_from_field(fld: VectorField) -> StructuredSystem:
    n = fld.A.shape[0] // 2
    names = tuple(f"x{i + 1}p" for i in range(n)) + tuple(f"x{i + 1}m" for i in range(n))
    return StructuredSystem(names, fld.A, fld.B, fld.eta)


def linearize(crn, x_star) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian ``A_s = A + eta J{x*}`` and the product ``W_p J{x*}``.

    The second matrix vanishes identically, which is why the I/O dynamics
    do not depend on the operating point.
    """
    fld = _as_field(crn)
    x_star = np.asarray(x_star, dtype=float)
    if np.any(x_star < 0):
        raise ValueError("x_star must be non-negative")
    J = fld.annihilation_jacobian(x_star)
    n = fld.n
    Wp = np.hstack([np.eye(n), -np.eye(n)])
    return fld.A + fld.eta * J, Wp @ J


def structure_of(model) -> StructuredSystem:
    if isinstance(model, StructuredSystem):
        return model
    if isinstance(model, Crn):
        return extract_structure(model)
    return extract_structure_from_field(_as_field(model))
