"""Variational mesh adaptation: monitor, energy functional, gradient flow.

The distance-based monitor concentrates elements near the pit boundary.
Minimizing the equidistribution/alignment energy over vertex positions
moves the mesh; the motion is the gradient flow dx/dt = -(P/tau) dI/dx.
tau only rescales time, so the flow is integrated in normalized pseudo
time with budget dt/tau: small tau relaxes the mesh far toward the energy
minimum each step, large tau leaves it lagging.

The integrator is explicit with adaptive substeps, energy-descent
backtracking, and inversion rejection; both energy terms blow up as an
element degenerates, so an accepted substep can never invert a cell.
With an unlimited budget (mesh smoothing runs the flow to stationarity)
substep sizes come from the Barzilai-Borwein secant estimate, which
converges far faster than stability-limited steps and has the same
stationary points.

Also hosts the 1D equidistribution oracle used for verification.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .mesh import (MeshError, PitChain, TriMesh, min_distance_to_pit,
                   vertex_roles)

logger = logging.getLogger("pitmesh.adapt")

_MESH_DIM = 2  # functional exponents are wired for d = 2


@dataclass
class AdaptParams:
    mu1: float = 100.0            # monitor magnitude at the pit boundary
    mu2: float = 1.0              # monitor decay rate with distance
    tau: float = 1e-5             # mesh response time, seconds
    theta: float = 1.0 / 3.0      # energy balance exponent, in (0, 1/2)
    gamma: float = 1.5            # energy power, > 1
    smoothing_tol: float = 1e-2   # displacement-sum stop, micrometers
    smoothing_max_iters: int = 40
    smooth_physics_every: int = 1
    # gradient-flow integrator knobs (the upstream formulation names no
    # integrator; these control the explicit substepping)
    max_substeps: int = 500
    smoothing_substeps: int = 1000
    disp_frac: float = 0.2        # substep displacement cap vs local edge
    grad_tol: float = 1e-7        # stationarity exit on the projected gradient
    grad_rtol: float = 1e-3       # ... or relative to the interval's start
    # budgets dt/tau at least this large cannot bind before the flow is
    # stationary, so secant-accelerated substeps reach the same endpoint
    bb_threshold: float = 1e4

    def validate(self) -> None:
        if self.mu1 < 0.0 or self.mu2 < 0.0:
            raise ValueError("mu1 and mu2 must be >= 0")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.theta < 0.5:
            raise ValueError(f"theta must be in (0, 1/2), got {self.theta}")
        if self.gamma <= 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if self.smoothing_tol <= 0.0:
            raise ValueError("smoothing_tol must be positive")
        if self.smoothing_max_iters < 1:
            raise ValueError("smoothing_max_iters must be >= 1")


def monitor_mackenzie(mesh: TriMesh, chains: Sequence[PitChain],
                      p: AdaptParams) -> np.ndarray:
    """Distance-based monitor M(x) = (1 + mu1/sqrt(mu2^2 d^2 + 1)) I.

    Returns one symmetric 2x2 tensor per vertex, (nv, 2, 2).  Without any
    chains (plain rectangle meshes) the metric is the identity.
    """
    nv = mesh.n_vertices
    if chains and p.mu1 > 0.0:
        d = min_distance_to_pit(mesh.vertices, chains, mesh)
        m = 1.0 + p.mu1 / np.sqrt(p.mu2 ** 2 * d ** 2 + 1.0)
    else:
        m = np.ones(nv)
    out = np.zeros((nv, 2, 2))
    out[:, 0, 0] = m
    out[:, 1, 1] = m
    return out


def element_metrics(mesh: TriMesh, metric: np.ndarray) -> np.ndarray:
    """Cell tensors M_K as the mean of the three vertex tensors."""
    return metric[mesh.triangles].mean(axis=1)


def vertex_p_scaling(metric: np.ndarray) -> np.ndarray:
    """Invariance scaling P_i = det(M_i)^(1/(d+2)) per vertex."""
    det = metric[:, 0, 0] * metric[:, 1, 1] - metric[:, 0, 1] * metric[:, 1, 0]
    return det ** (1.0 / (_MESH_DIM + 2))


class _ElementFunctional:
    """Energy and gradient over elements with a frozen per-cell metric.

    Per cell with edge matrix E = [x1-x0, x2-x0], J = E^-1, A2 = det(E):
        I_K = c1 * A2 * T^gamma + c2 * A2^(1-gamma),  T = tr(J M^-1 J^T)
    with c1 = theta sqrt(det M)/2 and
    c2 = (1-2 theta) 2^(gamma-1) det(M)^((1-gamma)/2).
    Gradients use d det(E)/dE = A2 J^T and dT/dE = -2 J^T J M^-1 J^T.
    The 2x2 algebra is written out component-wise for speed.
    """

    def __init__(self, triangles: np.ndarray, cell_metric: np.ndarray,
                 theta: float, gamma: float):
        self.t0 = triangles[:, 0]
        self.t1 = triangles[:, 1]
        self.t2 = triangles[:, 2]
        self.gamma = gamma
        det = (cell_metric[:, 0, 0] * cell_metric[:, 1, 1]
               - cell_metric[:, 0, 1] * cell_metric[:, 1, 0])
        if np.any(det <= 0.0):
            raise MeshError("metric tensor with non-positive determinant")
        self.m00 = cell_metric[:, 1, 1] / det
        self.m01 = -cell_metric[:, 0, 1] / det
        self.m11 = cell_metric[:, 0, 0] / det
        self.c1 = theta * np.sqrt(det) / 2.0
        self.c2 = (1.0 - 2.0 * theta) * 2.0 ** (gamma - 1.0) \
            * det ** ((1.0 - gamma) / 2.0)

    def _edges(self, x: np.ndarray):
        p0x, p0y = x[self.t0, 0], x[self.t0, 1]
        e00 = x[self.t1, 0] - p0x
        e10 = x[self.t1, 1] - p0y
        e01 = x[self.t2, 0] - p0x
        e11 = x[self.t2, 1] - p0y
        return e00, e01, e10, e11, e00 * e11 - e01 * e10

    def signed_area2(self, x: np.ndarray) -> np.ndarray:
        return self._edges(x)[4]

    def _trace(self, j00, j01, j10, j11):
        # tr(J M^-1 J^T) with symmetric M^-1
        return (self.m00 * (j00 * j00 + j10 * j10)
                + 2.0 * self.m01 * (j00 * j01 + j10 * j11)
                + self.m11 * (j01 * j01 + j11 * j11))

    def try_energy(self, x: np.ndarray) -> Optional[float]:
        """Total energy, or None if any element is inverted."""
        e00, e01, e10, e11, a2 = self._edges(x)
        if np.any(a2 <= 0.0):
            return None
        j00, j01 = e11 / a2, -e01 / a2
        j10, j11 = -e10 / a2, e00 / a2
        tr = self._trace(j00, j01, j10, j11)
        g = self.gamma
        return float(np.sum(self.c1 * a2 * tr ** g + self.c2 * a2 ** (1.0 - g)))

    def energy(self, x: np.ndarray) -> float:
        val = self.try_energy(x)
        if val is None:
            a2 = self.signed_area2(x)
            raise MeshError(f"energy of inverted cell {int(np.argmin(a2))}")
        return val

    def gradient(self, x: np.ndarray) -> np.ndarray:
        e00, e01, e10, e11, a2 = self._edges(x)
        if np.any(a2 <= 0.0):
            raise MeshError(f"gradient at inverted cell {int(np.argmin(a2))}")
        j00, j01 = e11 / a2, -e01 / a2
        j10, j11 = -e10 / a2, e00 / a2
        tr = self._trace(j00, j01, j10, j11)
        g = self.gamma

        # B = J M^-1 J^T (symmetric), W = -2 J^T B = dT/dE
        jm00 = j00 * self.m00 + j01 * self.m01
        jm01 = j00 * self.m01 + j01 * self.m11
        jm10 = j10 * self.m00 + j11 * self.m01
        jm11 = j10 * self.m01 + j11 * self.m11
        b00 = jm00 * j00 + jm01 * j01
        b01 = jm00 * j10 + jm01 * j11
        b11 = jm10 * j10 + jm11 * j11
        w00 = -2.0 * (j00 * b00 + j10 * b01)
        w01 = -2.0 * (j00 * b01 + j10 * b11)
        w10 = -2.0 * (j01 * b00 + j11 * b01)
        w11 = -2.0 * (j01 * b01 + j11 * b11)

        coef_a = self.c1 * tr ** g + self.c2 * (1.0 - g) * a2 ** (-g)
        coef_w = self.c1 * a2 * g * tr ** (g - 1.0)
        # dA2/dE entries are (e11, -e10; -e01, e00)
        ge00 = coef_a * e11 + coef_w * w00
        ge01 = -coef_a * e10 + coef_w * w01
        ge10 = -coef_a * e01 + coef_w * w10
        ge11 = coef_a * e00 + coef_w * w11

        nv = len(x)
        grad = np.empty((nv, 2))
        grad[:, 0] = (np.bincount(self.t1, weights=ge00, minlength=nv)
                      + np.bincount(self.t2, weights=ge01, minlength=nv)
                      - np.bincount(self.t0, weights=ge00 + ge01, minlength=nv))
        grad[:, 1] = (np.bincount(self.t1, weights=ge10, minlength=nv)
                      + np.bincount(self.t2, weights=ge11, minlength=nv)
                      - np.bincount(self.t0, weights=ge10 + ge11, minlength=nv))
        return grad


def energy(mesh: TriMesh, metric: np.ndarray, p: AdaptParams) -> float:
    """Total adaptation energy of the mesh under a frozen vertex metric."""
    fn = _ElementFunctional(mesh.triangles, element_metrics(mesh, metric),
                            p.theta, p.gamma)
    return fn.energy(mesh.vertices)


def grad_energy(mesh: TriMesh, metric: np.ndarray, p: AdaptParams) -> np.ndarray:
    """Analytic dI/dx per vertex, (nv, 2); metric values are held fixed."""
    fn = _ElementFunctional(mesh.triangles, element_metrics(mesh, metric),
                            p.theta, p.gamma)
    return fn.gradient(mesh.vertices)


@dataclass
class MmpdeResult:
    positions: np.ndarray
    substeps: int
    pseudo_time: float       # integrated pseudo time in units of tau
    stopped: str             # "budget" | "stationary" | "substep-cap"
    max_displacement: float


def _local_scale(x: np.ndarray, t0, t1, t2) -> np.ndarray:
    """Shortest incident edge length per vertex."""
    scale = np.full(len(x), np.inf)
    for (i, j) in ((t0, t1), (t1, t2), (t2, t0)):
        ln = np.hypot(x[i, 0] - x[j, 0], x[i, 1] - x[j, 1])
        np.minimum.at(scale, i, ln)
        np.minimum.at(scale, j, ln)
    return scale


def mmpde_step(mesh: TriMesh, metric: np.ndarray, p: AdaptParams,
               dt_interval: float, max_substeps: Optional[int] = None,
               grad_tol: Optional[float] = None) -> MmpdeResult:
    """Integrate the mesh gradient flow over one interval.

    Returns the new vertex positions (the mesh itself is untouched).
    Interior vertices move freely, top/bottom vertices slide in x,
    left/right vertices slide in y; rectangle corners and all pit-chain
    vertices are pinned (the front owns them).
    """
    max_substeps = p.max_substeps if max_substeps is None else max_substeps
    budget = dt_interval / p.tau
    bb_mode = budget >= p.bb_threshold

    fn = _ElementFunctional(mesh.triangles, element_metrics(mesh, metric),
                            p.theta, p.gamma)
    pscale = vertex_p_scaling(metric)[:, None]
    roles = vertex_roles(mesh)
    x = mesh.vertices.copy()
    x0 = mesh.vertices
    current = fn.energy(x)
    scale = _local_scale(x, fn.t0, fn.t1, fn.t2)

    def velocity(pos):
        v = -pscale * fn.gradient(pos)
        v[roles.pinned] = 0.0
        v[roles.slide_x, 1] = 0.0
        v[roles.slide_y, 0] = 0.0
        return v

    s = 0.0
    stopped = "substep-cap"
    shrink = 1.0
    prev_x = None
    prev_v = None
    n_done = 0
    v = velocity(x)
    g0max = float(np.max(np.abs(v / pscale)))
    # an explicit grad_tol is an exact threshold; the default combines the
    # absolute floor with a tolerance relative to the interval's start
    stop_tol = grad_tol if grad_tol is not None \
        else max(p.grad_tol, p.grad_rtol * g0max)
    for _ in range(max_substeps):
        gmax = float(np.max(np.abs(v / pscale)))
        if gmax < stop_tol:
            stopped = "stationary"
            break
        vrel = float(np.max(np.hypot(v[:, 0], v[:, 1]) / scale))
        if vrel <= 0.0:
            stopped = "stationary"
            break
        cap = p.disp_frac / vrel
        ds = cap
        if bb_mode and prev_x is not None:
            dx = (x - prev_x).ravel()
            dv = (prev_v - v).ravel()
            denom = float(dx @ dv)
            if denom > 0.0:
                ds = min(float(dx @ dx) / denom, 100.0 * cap)
        ds = min(ds * shrink, budget - s)
        if ds * vrel * max(1.0, 1.0 / p.disp_frac) < 1e-14:
            stopped = "stationary"
            break
        accepted = False
        for _ in range(40):
            trial = x + ds * v
            trial_energy = fn.try_energy(trial)
            if trial_energy is not None and \
                    trial_energy <= current + 1e-12 * max(1.0, abs(current)):
                accepted = True
                break
            ds *= 0.5
            shrink = max(shrink * 0.5, 1e-6)
        if not accepted:
            raise MeshError(
                "mmpde substep rejected down to the step floor "
                f"(substep {n_done + 1}, energy {current:.6g})")
        shrink = min(1.0, shrink * 2.0)
        prev_x, prev_v = x, v
        x, current = trial, trial_energy
        s += ds
        n_done += 1
        if s >= budget * (1.0 - 1e-12):
            stopped = "budget"
            break
        if n_done % 25 == 0:
            scale = _local_scale(x, fn.t0, fn.t1, fn.t2)
        v = velocity(x)

    moved = x - x0
    max_disp = float(np.max(np.hypot(moved[:, 0], moved[:, 1]))) if len(x) else 0.0
    return MmpdeResult(x, n_done, s, stopped, max_disp)


@dataclass
class SmoothResult:
    mesh: TriMesh
    trace: list = field(default_factory=list)      # displacement sum per iter
    trace_max: list = field(default_factory=list)  # max vertex move per iter
    converged: bool = False


def smooth_mesh(mesh: TriMesh, chains: Sequence[PitChain], p: AdaptParams,
                physics_callback: Optional[Callable[[TriMesh], None]] = None,
                max_iters: Optional[int] = None) -> SmoothResult:
    """Alternate physics solves and mesh relaxation until the mesh settles.

    Each iteration rebuilds the monitor at the current vertex positions and
    integrates the flow to stationarity under that frozen metric; the loop
    stops when the summed vertex displacement drops below smoothing_tol.
    Returns the smoothed mesh and the per-iteration displacement trace.
    """
    max_iters = p.smoothing_max_iters if max_iters is None else max_iters
    work = mesh.copy()
    trace = []
    trace_max = []
    converged = False
    for it in range(max_iters):
        metric = monitor_mackenzie(work, chains, p)
        if physics_callback is not None and it % max(1, p.smooth_physics_every) == 0:
            physics_callback(work)
        # run the flow to absolute stationarity: the outer loop then sees
        # only the metric-update fixed point, not integrator leftovers
        res = mmpde_step(work, metric, p, dt_interval=np.inf,
                         max_substeps=p.smoothing_substeps,
                         grad_tol=p.grad_tol)
        moved = res.positions - work.vertices
        disp = float(np.sum(np.hypot(moved[:, 0], moved[:, 1])))
        work.vertices = res.positions
        trace.append(disp)
        trace_max.append(res.max_displacement)
        if disp < p.smoothing_tol:
            converged = True
            break
    if not converged:
        logger.warning("mesh smoothing hit max_iters=%d with displacement %.3g",
                       max_iters, trace[-1] if trace else float("nan"))
    return SmoothResult(work, trace, trace_max, converged)


def solve_equidistribution_1d(rho: Callable[[float], float], a: float, b: float,
                              N: int) -> np.ndarray:
    """Equidistributing mesh for a positive density on [a, b].

    Returns x_0..x_N with equal integrals of rho over every subinterval,
    found by inverting the cumulative integral with adaptive quadrature.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if b <= a:
        raise ValueError("need b > a")
    samples = np.linspace(a, b, 513)
    vals = np.array([rho(float(s)) for s in samples])
    if np.any(vals <= 0.0):
        bad = float(samples[int(np.argmin(vals))])
        raise ValueError(f"density must be positive; rho({bad:g}) <= 0")

    sigma, _ = quad(rho, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)

    points = np.empty(N + 1)
    points[0] = a
    points[N] = b
    lo = a
    for i in range(1, N):
        target = sigma * i / N

        def balance(x):
            val, _ = quad(rho, a, x, epsabs=1e-13, epsrel=1e-13, limit=200)
            return val - target

        points[i] = brentq(balance, lo, b, xtol=1e-14, rtol=8.9e-16)
        lo = points[i]
    return points
