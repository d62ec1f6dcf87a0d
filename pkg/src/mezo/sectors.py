"""Multi-sector linear growth dK/dt = G K with piecewise-constant G.

Includes the closed-form eigen solution, a numerical integrator used as an
independent cross-check and as the fallback for defective matrices, the
two-sector policy-transfer matrix, and a detector that separates cusp-shaped
maxima (shocks) from smooth extrema in log-scale trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from mezo._rng import frozen
from mezo.errors import DefectiveMatrixError, NumericalError

EIG_RESIDUAL_TOL = 1e-10
EIGVEC_COND_LIMIT = 1e6  # analytic error grows like cond * eps; beyond this integrate numerically
NUMERICAL_RTOL = 1e-13


@dataclass(frozen=True)
class GrowthMatrix:
    entries: np.ndarray

    def __post_init__(self):
        g = np.array(self.entries, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise ValueError(f"growth matrix must be square and non-empty, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("growth matrix entries must be finite")
        off = g[~np.eye(g.shape[0], dtype=bool)]
        if np.any(off < 0):
            raise ValueError("off-diagonal transfers must be >= 0")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def of(cls, rows) -> "GrowthMatrix":
        return cls(np.asarray(rows, dtype=float))


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    lambda_max: float
    analytic: bool
    residual: float


@dataclass(frozen=True)
class ShockSchedule:
    segments: tuple[tuple[float, GrowthMatrix], ...]
    initial_state: np.ndarray

    def __post_init__(self):
        segs = tuple((float(t), g if isinstance(g, GrowthMatrix) else GrowthMatrix.of(g)) for t, g in self.segments)
        k0 = np.array(self.initial_state, dtype=float)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at t=0")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if k0.ndim != 1 or any(g.n != k0.size for _, g in segs):
            raise ValueError("every matrix must match the dimension of the initial state")
        if np.any(k0 <= 0):
            raise ValueError("initial sector values must be > 0")
        k0.setflags(write=False)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "initial_state", k0)

    @classmethod
    def constant(cls, g, k0) -> "ShockSchedule":
        return cls(((0.0, g),), k0)


@dataclass(frozen=True)
class SectorTrajectory:
    times: np.ndarray
    k: np.ndarray  # (len(times), n)
    k_tot: np.ndarray
    rates: np.ndarray  # instantaneous (G K)_i / K_i
    method: str

    @property
    def log_k_tot(self) -> np.ndarray:
        return np.log(self.k_tot)


@dataclass(frozen=True)
class Extremum:
    time: float
    index: int
    kind: Literal["cusp-max", "smooth-max", "smooth-min", "cusp-min"]
    kink: float  # fitted slope jump of the log series at the point, per sample
    curvature: float  # fitted smooth second difference, per sample


# ---------------------------------------------------------------------------


def build_policy_matrix(g11: float, g22: float, mu: float) -> GrowthMatrix:
    """Two-sector matrix with a symmetric transfer ``mu/2`` each way."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return GrowthMatrix.of([[g11 - mu / 2, mu / 2], [mu / 2, g22 - mu / 2]])


def _eigen_2x2(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    a, b = g[0]
    c, d = g[1]
    h = (a - d) / 2
    root = math.hypot(h, math.sqrt(b * c))  # b, c >= 0
    half_tr = (a + d) / 2
    lam = np.array([half_tr + root, half_tr - root])
    if b == 0 and c == 0:
        # decoupled; keep the order of lam
        vecs = np.eye(2) if a >= d else np.eye(2)[:, ::-1]
        return lam, vecs, True
    if root == 0:
        return lam, np.array([[1.0, 1.0], [0.0, 0.0]]), False
    # pick the row of (G - lam I) whose entries do not cancel
    v1 = np.array([h + root, c]) if h >= 0 else np.array([b, root - h])
    v2 = np.array([h - root, c]) if h <= 0 else np.array([b, -h - root])
    cols = []
    for v in (v1, v2):
        v = v / np.abs(v).max()  # rescale first so tiny entries do not underflow
        v = v / np.linalg.norm(v)
        cols.append(-v if v.sum() < 0 else v)
    vecs = np.column_stack(cols)
    # unit columns: |det| is the sine of the angle between them
    return lam, vecs, bool(abs(np.linalg.det(vecs)) > 1 / EIGVEC_COND_LIMIT)


def eigen_solve(g: GrowthMatrix) -> EigenSystem:
    """Eigen-decomposition; closed form for 2x2, LAPACK with residual check otherwise.

    ``analytic`` is False when the eigenbasis is incomplete (defective G).
    """
    m = g.entries
    if g.n == 1:
        vals, vecs, complete = m[0].copy(), np.ones((1, 1)), True
    elif g.n == 2:
        vals, vecs, complete = _eigen_2x2(m)
    else:
        vals, vecs = np.linalg.eig(m)
        complete = np.linalg.cond(vecs) < EIGVEC_COND_LIMIT
    scale = max(np.linalg.norm(m, 2), 1e-300)
    residual = float(np.max(np.linalg.norm(m @ vecs - vecs * vals, axis=0))) if complete else float("nan")
    if complete and residual > EIG_RESIDUAL_TOL * scale:
        raise NumericalError(f"eigen residual {residual:.3g} exceeds tolerance")
    lam_max = float(np.max(np.real(vals)))
    return EigenSystem(frozen(vals), frozen(vecs), lam_max, bool(complete), residual)


def analytic_solution(g: GrowthMatrix, k0, t, eig: EigenSystem | None = None) -> np.ndarray:
    """K(t) = sum_i c_i exp(lambda_i t) u_i with K(0) = sum_i c_i u_i.

    ``t`` may be a scalar (returns a vector) or an array (returns rows).
    """
    eig = eig or eigen_solve(g)
    if not eig.analytic:
        raise DefectiveMatrixError("growth matrix is defective; use integrate(..., method='numerical')")
    k0 = np.asarray(k0, dtype=float)
    coords = np.linalg.solve(eig.eigenvectors, k0.astype(eig.eigenvectors.dtype))
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.exp(np.outer(tt, eig.eigenvalues)) * coords @ eig.eigenvectors.T
    out = np.real(out)
    return out[0] if np.ndim(t) == 0 else out


def _numerical(g: np.ndarray, k0: np.ndarray, t_eval: np.ndarray, t_end: float) -> np.ndarray:
    if t_end == 0:
        return np.tile(k0, (t_eval.size, 1))
    sol = solve_ivp(
        lambda _t, y: g @ y, (0.0, t_end), k0, method="RK45", t_eval=t_eval,
        rtol=NUMERICAL_RTOL, atol=NUMERICAL_RTOL * 1e-3 * float(np.abs(k0).max()),
    )
    if not sol.success:
        raise NumericalError(f"integration failed: {sol.message}")
    return sol.y.T


def integrate(
    schedule: ShockSchedule,
    t_grid: Sequence[float],
    method: Literal["auto", "analytic", "numerical"] = "auto",
) -> SectorTrajectory:
    """Trajectory of a shock schedule sampled on ``t_grid``.

    Each segment is solved from the state at its start; the state at the
    segment end seeds the next one. ``auto`` uses the eigen solution and
    falls back to numerical integration for defective matrices.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if t_grid[0] < 0:
        raise ValueError("t_grid must lie within the schedule span (t >= 0)")
    segs = schedule.segments
    n = schedule.initial_state.size
    k = np.empty((t_grid.size, n))
    rates = np.empty_like(k)
    used = set()
    state = schedule.initial_state.copy()
    for idx, (start, g) in enumerate(segs):
        end = segs[idx + 1][0] if idx + 1 < len(segs) else max(t_grid[-1], start)
        last = idx + 1 == len(segs)
        mask = (t_grid >= start) & ((t_grid <= end) if last else (t_grid < end))
        local = np.r_[t_grid[mask] - start, end - start]
        use = method
        if method != "numerical":
            eig = eigen_solve(g)
            if eig.analytic:
                use = "analytic"
            elif method == "analytic":
                raise DefectiveMatrixError(f"segment {idx} matrix is defective")
            else:
                use = "numerical"
        if use == "analytic":
            vals = analytic_solution(g, state, local, eig)
        else:
            uniq, inv = np.unique(local, return_inverse=True)
            vals = _numerical(g.entries, state, uniq, end - start)[inv]
        used.add(use)
        k[mask] = vals[:-1]
        rates[mask] = (vals[:-1] @ g.entries.T) / vals[:-1]
        state = vals[-1]
    label = used.pop() if len(used) == 1 else "mixed"
    return SectorTrajectory(frozen(t_grid), frozen(k), frozen(k.sum(axis=1)), frozen(rates), label)


def asymptotic_ratio(g: GrowthMatrix) -> float:
    """Long-run k1/k2: ratio of the dominant eigenvector's components."""
    if g.n != 2:
        raise ValueError("asymptotic_ratio needs a 2x2 matrix")
    eig = eigen_solve(g)
    vals = np.real(eig.eigenvalues)
    if np.isclose(vals[0], vals[1], rtol=0, atol=1e-14):
        raise ValueError("dominant eigenvalue is degenerate; ratio undefined")
    u = eig.eigenvectors[:, int(np.argmax(vals))]
    return float(u[0] / u[1])


# ---------------------------------------------------------------------------
# cusp detection


def _local_fit(y: np.ndarray, i: int, w: int):
    tau = np.arange(-w, w + 1, dtype=float)
    # tau*|tau| lets the curvature differ on either side of the kink
    X = np.column_stack([np.ones_like(tau), tau, tau**2, np.abs(tau), tau * np.abs(tau)])
    seg = y[i - w : i + w + 1]
    coef, *_ = np.linalg.lstsq(X, seg, rcond=None)
    resid = seg - X @ coef
    dof = max(seg.size - X.shape[1], 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    kink_se = 2 * math.sqrt(max(cov[3, 3], 0.0))
    return 2 * coef[3], 2 * coef[2], kink_se, float(resid @ resid)


def detect_cusps(
    series,
    times=None,
    theta: float = 10.0,
    window: int | None = None,
    z_min: float = 4.0,
) -> list[Extremum]:
    """Locate extrema of ``log(series)`` and classify them as cusps or smooth.

    Around each windowed extremum the log series is fitted with
    ``a + b*tau + c*tau**2 + e*|tau|``. The kink term ``2e`` is the slope
    jump per sample and ``2c`` the smooth second difference. An extremum is a
    cusp when the kink exceeds ``theta`` times the smooth curvature and is
    ``z_min`` standard errors from zero; otherwise it is smooth.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 16:
        raise ValueError("need a 1-d series with at least 16 samples")
    if np.any(~(x > 0)):
        raise ValueError("series must be strictly positive (analysis is on the log scale)")
    t = np.arange(x.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    y = np.log(x)
    n = y.size
    w = window or max(3, min(20, n // 15))
    out: list[Extremum] = []
    i = w
    while i < n - w:
        nb = y[i - w : i + w + 1]
        is_max = y[i] == nb.max() and y[i] > y[i - 1]
        is_min = y[i] == nb.min() and y[i] < y[i - 1]
        if not (is_max or is_min):
            i += 1
            continue
        kink, curv, kink_se, _ = _local_fit(y, i, w)
        sharp = abs(kink) >= theta * abs(curv) and abs(kink) >= z_min * kink_se
        if is_max:
            cusp = sharp and kink < 0
            if cusp:
                # snap to the best-fitting kink location nearby
                lo, hi = max(w, i - w // 2), min(n - w - 1, i + w // 2)
                best = min(range(lo, hi + 1), key=lambda j: _local_fit(y, j, w)[3])
                if best != i:
                    i = best
                    kink, curv, kink_se, _ = _local_fit(y, i, w)
            kind = "cusp-max" if cusp else "smooth-max"
        else:
            kind = "cusp-min" if (sharp and kink > 0) else "smooth-min"
        out.append(Extremum(float(t[i]), i, kind, float(kink), float(curv)))
        i += w
    return out
