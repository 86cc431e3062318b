"""Deterministic integration of mass-action dynamics.

Reference inputs are piecewise constant, so integration proceeds segment by
segment and every step change is hit exactly.  ``scipy.integrate.solve_ivp``
provides the adaptive integrators: an explicit embedded Runge-Kutta pair by
default and LSODA/BDF/Radau when ``method`` asks for a stiff solver.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .crn import StructuredSystem, VectorField, rotation
from .errors import StepUnderflow

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e6  # nM
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-12  # nM
#: Initial concentration of every rail when nothing else is given (nM).
DEFAULT_X0 = 1.0
STIFF_METHODS = ("LSODA", "BDF", "Radau")


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant reference as ``(t_start, r_plus, r_minus)`` steps.

    The value of a step holds until the next step starts.  At most one rail
    may be non-zero at a time.
    """

    steps: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)

    def __post_init__(self):
        steps = tuple((float(t), float(rp), float(rm)) for t, rp, rm in self.steps)
        if not steps:
            steps = ((0.0, 0.0, 0.0),)
        times = [s[0] for s in steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("step start times must be strictly increasing")
        for t, rp, rm in steps:
            if rp < 0 or rm < 0:
                raise ValueError(f"reference rails must be non-negative (step at t={t})")
            if rp > 0 and rm > 0:
                raise ValueError(f"only one reference rail may be non-zero at a time (step at t={t})")
        if steps[0][0] > 0:
            steps = ((0.0, 0.0, 0.0),) + steps
        object.__setattr__(self, "steps", steps)

    @classmethod
    def constant(cls, r_plus: float = 0.0, r_minus: float = 0.0) -> "ReferenceProfile":
        return cls(((0.0, r_plus, r_minus),))

    @classmethod
    def from_signed(cls, steps: Sequence[tuple[float, float]]) -> "ReferenceProfile":
        """Build from ``(t_start, r)`` pairs with signed ``r``."""
        return cls(tuple((t, max(r, 0.0), max(-r, 0.0)) for t, r in steps))

    @classmethod
    def from_dict(cls, doc) -> "ReferenceProfile":
        return cls(tuple((s["t"], s.get("r_plus", 0.0), s.get("r_minus", 0.0)) for s in doc["steps"]))

    def to_dict(self) -> dict:
        return {"steps": [{"t": t, "r_plus": rp, "r_minus": rm} for t, rp, rm in self.steps]}

    def at(self, t: float) -> np.ndarray:
        times = [s[0] for s in self.steps]
        i = int(np.searchsorted(times, t, side="right")) - 1
        _, rp, rm = self.steps[max(i, 0)]
        return np.array([rp, rm])

    def signed(self, t: float) -> float:
        rp, rm = self.at(t)
        return rp - rm

    def segments(self, t_end: float) -> list[tuple[float, float, np.ndarray]]:
        out = []
        for i, (t0, rp, rm) in enumerate(self.steps):
            if t0 >= t_end:
                break
            t1 = self.steps[i + 1][0] if i + 1 < len(self.steps) else t_end
            out.append((t0, min(t1, t_end), np.array([rp, rm])))
        return out


#: Representative step sequence for the PI example (signed r in nM).  The
#: reference returns to zero at 7e4 s.
STEP_PROFILE = ReferenceProfile.from_signed([(0.0, 1.0), (2.5e4, -1.0), (5e4, 0.5), (7e4, 0.0)])


@dataclass
class Trajectory:
    """Sampled solution.

    ``x`` holds the signal rails (plus rails first), one row per time point;
    ``aux`` optionally holds further species such as DSD fuels.
    """

    t: np.ndarray
    x: np.ndarray
    species: list[str]
    r: np.ndarray
    rates: np.ndarray | None = None
    events: list[dict] = field(default_factory=list)
    diverged: bool = False
    stats: dict = field(default_factory=dict)
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1] // 2

    @property
    def p(self) -> np.ndarray:
        return self.x[:, : self.n] - self.x[:, self.n :]

    @property
    def q(self) -> np.ndarray:
        return self.x[:, : self.n] + self.x[:, self.n :]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def column(self, name: str) -> np.ndarray:
        if name in self.species:
            return self.x[:, self.species.index(name)]
        return self.aux[name]

    def to_csv(self, fh=None) -> str | None:
        """Write ``t,<species...>,p1..pN,q1..qN`` rows (s, nM)."""
        own = fh is None
        buf = io.StringIO() if own else fh
        w = csv.writer(buf, lineterminator="\n")
        n = self.n
        aux_names = list(self.aux)
        w.writerow(
            ["t"] + self.species + aux_names + [f"p{i + 1}" for i in range(n)] + [f"q{i + 1}" for i in range(n)]
        )
        p, q = self.p, self.q
        for k in range(len(self.t)):
            row = [self.t[k], *self.x[k], *(self.aux[a][k] for a in aux_names), *p[k], *q[k]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue() if own else None

    def sidecar(self) -> dict:
        return {
            "species": self.species,
            "n_points": int(len(self.t)),
            "t_end": float(self.t[-1]),
            "diverged": bool(self.diverged),
            "events": self.events,
            "stats": self.stats,
            "final_state": {s: float(v) for s, v in zip(self.species, self.final)},
        }


def _make_rhs(fun: Callable, r: np.ndarray):
    return lambda t, x: fun(x, r)


def _solve(
    fun: Callable,
    x0: np.ndarray,
    profile: ReferenceProfile,
    t_end: float,
    *,
    jac: Callable | None = None,
    method: str = "RK45",
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval: np.ndarray | None = None,
    divergence: float | None = DIVERGENCE_THRESHOLD,
    watch: slice = slice(None),
    clip: bool = True,
    max_step: float = np.inf,
    size: Callable | None = None,
):
    """Integrate ``x' = fun(x, r)`` across the profile's segments.

    Divergence is declared when ``size(x)`` (by default the largest watched
    concentration) exceeds ``divergence``.  With ``clip=False`` the state
    may be signed and nothing is clipped.

    Returns ``(t, X, R, events, diverged, stats)`` with the raw minimum
    value seen before clipping recorded in ``stats['min_raw']``.
    """
    x = np.array(x0, dtype=float)
    if clip and np.any(x < 0):
        raise ValueError("initial state must be non-negative")
    if size is None:
        size = lambda y: np.max(y[watch])  # noqa: E731
    ts, xs, rs = [np.array([0.0])], [x[None, :]], []
    events: list[dict] = []
    # accepted steps are only counted when no output grid is given
    stats = {"method": method, "rtol": rtol, "atol": atol, "nfev": 0, "njev": 0, "steps": 0, "min_raw": float(x.min())}
    diverged = False
    if divergence is not None:

        def blowup(t, y):
            return divergence - size(y)

        blowup.terminal = True
        blowup.direction = -1
        ev = [blowup]
    else:
        ev = None
    t_eval = None if t_eval is None else np.asarray(t_eval, dtype=float)
    for t0, t1, r in profile.segments(t_end):
        if t1 <= t0:
            continue
        events.append({"t": t0, "kind": "reference", "r_plus": float(r[0]), "r_minus": float(r[1])})
        seg_eval = None
        if t_eval is not None:
            seg_eval = t_eval[(t_eval > t0) & (t_eval <= t1)]
            if not len(seg_eval) or seg_eval[-1] != t1:
                seg_eval = np.append(seg_eval, t1)
        kwargs = {}
        if jac is not None and method in STIFF_METHODS:
            kwargs["jac"] = lambda t, y, r=r: jac(y, r)
        sol = solve_ivp(
            _make_rhs(fun, r),
            (t0, t1),
            x,
            method=method,
            rtol=rtol,
            atol=atol,
            t_eval=seg_eval,
            events=ev,
            max_step=max_step,
            **kwargs,
        )
        stats["nfev"] += int(sol.nfev)
        stats["njev"] += int(getattr(sol, "njev", 0) or 0)
        if sol.status == -1:
            y_last = sol.y[:, -1] if sol.y.size else x
            t_last = float(sol.t[-1]) if sol.t.size else t0
            raise StepUnderflow(sol.message, t_last, y_last)
        if seg_eval is None:
            seg_t, seg_y = sol.t[1:], sol.y[:, 1:]
        else:
            seg_t, seg_y = sol.t, sol.y
        # an event before the first output sample leaves these empty lists
        seg_t = np.asarray(seg_t, dtype=float)
        seg_y = np.asarray(seg_y, dtype=float).reshape(len(x), -1)
        if seg_eval is None:
            stats["steps"] += int(len(sol.t) - 1)
        if sol.status == 1 and sol.t_events and len(sol.t_events[0]):
            te = float(sol.t_events[0][0])
            ye = sol.y_events[0][0]
            keep = seg_t < te
            seg_t = np.append(seg_t[keep], te)
            seg_y = np.hstack([seg_y[:, keep], ye[:, None]])
            diverged = True
            events.append({"t": te, "kind": "divergence", "max_concentration": float(size(ye))})
        if seg_y.size:
            low = float(seg_y.min())
            stats["min_raw"] = min(stats["min_raw"], low)
            if clip and low < 0:
                events.append({"t": float(seg_t[int(np.argmin(seg_y.min(axis=0)))]), "kind": "clip", "min_raw": low})
                seg_y = np.maximum(seg_y, 0.0)
            ts.append(seg_t)
            xs.append(seg_y.T)
            x = seg_y[:, -1].copy()
        rs.append(np.repeat(r[None, :], len(seg_t), axis=0))
        if diverged:
            break
    t = np.concatenate(ts)
    X = np.vstack(xs)
    R = np.vstack([profile.at(0.0)[None, :]] + rs) if rs else np.repeat(profile.at(0.0)[None, :], len(t), axis=0)
    return t, X, R, events, diverged, stats


def integrate(
    field: VectorField,
    x0=None,
    profile: ReferenceProfile | None = None,
    t_end: float = 1e5,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    method: str = "RK45",
    t_eval=None,
    divergence: float = DIVERGENCE_THRESHOLD,
    species: list[str] | None = None,
    max_step: float = np.inf,
) -> Trajectory:
    """Integrate a dual-rail CRN from ``x0`` under a reference profile.

    Parameters
    ----------
    field : VectorField
        Right-hand side from :func:`dualrail.crn.mass_action_field`.
    x0 : array_like, optional
        Non-negative initial concentrations (nM); every rail at 1 nM if omitted.
    method : str
        ``"RK45"`` or ``"DOP853"`` (explicit), or a stiff solver
        (``"LSODA"``, ``"BDF"``, ``"Radau"``) that uses the analytic Jacobian.

    The trajectory's ``diverged`` flag is set, and integration stops, once a
    concentration exceeds ``divergence`` nM.
    """
    profile = profile or ReferenceProfile()
    n2 = field.A.shape[0]
    x0 = np.full(n2, DEFAULT_X0) if x0 is None else np.asarray(x0, dtype=float)
    t, X, R, events, diverged, stats = _solve(
        field,
        x0,
        profile,
        t_end,
        jac=lambda x, r: field.jacobian(x),
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        divergence=divergence,
        max_step=max_step,
    )
    rates = np.array([field(X[k], R[k]) for k in range(len(t))])
    if species is None:
        n = n2 // 2
        species = [f"x{i + 1}p" for i in range(n)] + [f"x{i + 1}m" for i in range(n)]
    if diverged:
        log.info("trajectory diverged at t=%.6g s", t[-1])
    return Trajectory(t, X, list(species), R, rates, events, diverged, stats)


def integrate_decoupled(
    system: StructuredSystem,
    x0=None,
    profile: ReferenceProfile | None = None,
    t_end: float = 1e5,
    *,
    decouple: bool = True,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    method: str = "RK45",
    t_eval=None,
    divergence: float = DIVERGENCE_THRESHOLD,
) -> Trajectory:
    """Integrate the rotated ``(p, q)`` dynamics.

    With ``decouple=True`` the cross blocks ``R12`` and ``R21`` are forced to
    zero, so the linear I/O part and the positive nonlinear part evolve
    separately.  ``decouple=False`` integrates the exact rotated model, which
    is the natural-coordinate model in different coordinates.  The returned
    trajectory is mapped back to natural coordinates (no clipping).
    """
    n = system.n
    R = system.R.copy()
    if decouple:
        R[:n, n:] = 0.0
        R[n:, :n] = 0.0
    WB = system.W @ system.B
    half_eta = system.eta / 2

    def fun(z, r):
        p, q = z[:n], z[n:]
        dz = R @ z + WB @ r
        dz[n:] -= half_eta * (q * q - p * p)
        return dz

    def jac(z, r):
        J = R.copy()
        p, q = z[:n], z[n:]
        J[n:, :n] += np.diag(2 * half_eta * p)
        J[n:, n:] -= np.diag(2 * half_eta * q)
        return J

    profile = profile or ReferenceProfile()
    x0 = np.full(2 * n, DEFAULT_X0) if x0 is None else np.asarray(x0, dtype=float)
    W = rotation(n)
    W_inv = 0.5 * W.T
    t, Z, Rr, events, diverged, stats = _solve(
        fun,
        W @ x0,
        profile,
        t_end,
        jac=jac,
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        divergence=divergence,
        clip=False,
        size=lambda z: np.max(np.abs(W_inv @ z)),
    )
    X = Z @ W_inv.T
    rates = np.array([W_inv @ fun(Z[k], Rr[k]) for k in range(len(t))])
    stats["coordinates"] = "rotated, decoupled" if decouple else "rotated"
    return Trajectory(t, X, list(system.names), Rr, rates, events, diverged, stats)


@dataclass(frozen=True)
class SteadyState:
    t: float
    x: np.ndarray


def detect_steady_state(traj: Trajectory, window: float, eps: float) -> SteadyState | None:
    """Earliest sample after which ``max|dx/dt| < eps`` for ``window`` seconds.

    The window must fit inside the trajectory; ``None`` when no such time
    exists (including diverged runs).
    """
    if traj.rates is None or traj.diverged:
        return None
    speed = np.abs(traj.rates).max(axis=1)
    t = traj.t
    slow = speed < eps
    # index of the last fast sample at or after each point
    last_fast = np.full(len(t), -1)
    idx = -1
    for k in range(len(t)):
        if not slow[k]:
            idx = k
        last_fast[k] = idx
    for k in range(len(t)):
        if not slow[k]:
            continue
        j = int(np.searchsorted(t, t[k] + window, side="left"))
        if j >= len(t):
            return None
        if last_fast[j] < k:
            return SteadyState(float(t[k]), traj.x[k].copy())
    return None


def save(traj: Trajectory, prefix, extra: dict | None = None) -> tuple[str, str]:
    """Write ``<prefix>.csv`` and ``<prefix>.json``; returns both paths."""
    csv_path, json_path = f"{prefix}.csv", f"{prefix}.json"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        traj.to_csv(fh)
    side = traj.sidecar()
    if extra:
        side.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
