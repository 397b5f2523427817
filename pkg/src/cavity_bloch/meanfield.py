"""Self-consistent steady states and time-dependent meanfield dynamics.

The atomic meanfield is a Bloch wave expanded over plane waves
``exp(i*2*n*x)`` (n = -n_max..n_max) and normalized over one lattice
period; the cavity is a classical amplitude ``alpha``.  Working in the
transformed frame freezes the quasimomentum at its initial value and
moves the external force into a momentum shift ``f*t``, so the lab-frame
quasimomentum is ``q0 + f*t`` by construction.

Coupled equations of motion (recoil units):

    i d(alpha)/dt = [-delta_c + N*u0*<cos^2 x> - i*kappa] * alpha + i*eta
    i d(c)/dt     = H(q0 + f*t, u0*|alpha|^2) c

with H the plane-wave Bloch Hamiltonian assembled by
:func:`bloch_hamiltonian`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import ConvergenceError, IntegrationError, ParameterError
from .params import SystemParams

__all__ = [
    "MeanfieldState",
    "MeanfieldTrajectory",
    "BlochBandSolution",
    "SelfConsistentState",
    "PumpCalibration",
    "cos2_expectation",
    "apply_cos2",
    "bloch_hamiltonian",
    "band_solve",
    "steady_state",
    "intensity_roots",
    "count_steady_states",
    "calibrate_pump",
    "evolve",
    "contrast",
    "depth_spectrum",
]

# Constructed states must be normalized to the integration drift bound;
# dense-interpolant samples sit slightly off the solution manifold, so the
# constructor tolerance matches the abort threshold rather than the much
# tighter drift the solver nodes themselves achieve.
NORM_TOL = 1e-8
NORM_DRIFT_ABORT = 1e-8


# ---------------------------------------------------------------------------
# domain types


@dataclass
class MeanfieldState:
    """Cavity amplitude and atomic plane-wave coefficients at one time."""

    alpha: complex
    coeffs: np.ndarray  # complex, length 2*n_max+1
    q0: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        norm = float(np.sum(np.abs(self.coeffs) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ParameterError([f"meanfield coefficients not normalized: sum |c_n|^2 = {norm!r}"])

    @property
    def n_max(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def lab_quasimomentum(self, force: float) -> float:
        """q0 + f*t reduced into the first Brillouin zone (-1, 1]."""
        q = self.q0 + force * self.t
        return q - 2.0 * math.ceil((q - 1.0) / 2.0)


@dataclass
class MeanfieldTrajectory:
    """Meanfield solution sampled on a uniform time grid."""

    params: SystemParams
    grid: np.ndarray  # (n,)
    alpha: np.ndarray  # (n,) complex
    coeffs: np.ndarray  # (n, K) complex
    dense: Callable | None = field(default=None, repr=False)  # dense interpolant y(t)

    @property
    def depth(self) -> np.ndarray:
        """Intracavity lattice depth s(t) = u0 |alpha(t)|^2."""
        return self.params.u0 * np.abs(self.alpha) ** 2

    @property
    def states(self) -> list[MeanfieldState]:
        return [
            MeanfieldState(self.alpha[k], self.coeffs[k], q0=self.params.q0, t=self.grid[k])
            for k in range(len(self.grid))
        ]

    def state_at(self, t: float) -> MeanfieldState:
        """State at an arbitrary time inside the span (dense interpolant)."""
        if self.dense is None:
            raise ValueError("trajectory has no dense interpolant")
        y = self.dense(t)
        return MeanfieldState(y[0], y[1:], q0=self.params.q0, t=t)

    @property
    def span(self) -> float:
        return float(self.grid[-1] - self.grid[0])


@dataclass
class BlochBandSolution:
    """Eigen-decomposition of the Bloch Hamiltonian at one (q, depth)."""

    q: float
    depth: float
    energies: np.ndarray  # ascending
    vectors: np.ndarray  # columns, real entries, gauge-fixed

    def ground(self) -> np.ndarray:
        return self.vectors[:, 0]


@dataclass
class SelfConsistentState:
    """Fixed point of the coupled cavity/atom steady-state equations."""

    params: SystemParams
    q: float
    alpha_ss: complex
    band: BlochBandSolution
    cos2: float
    converged: bool
    iterations: int

    @property
    def intensity(self) -> float:
        return float(abs(self.alpha_ss) ** 2)

    @property
    def depth(self) -> float:
        return self.params.u0 * self.intensity

    @property
    def delta_c_eff(self) -> float:
        """Effective detuning delta_c - N*u0*<cos^2 x>."""
        p = self.params
        return p.delta_c - p.n_atoms * p.u0 * self.cos2

    def as_meanfield_state(self) -> MeanfieldState:
        return MeanfieldState(self.alpha_ss, self.band.ground().astype(complex), q0=self.q, t=0.0)


@dataclass
class PumpCalibration:
    """Result of inverting the pump rate for a target minimum depth."""

    eta: float
    target_min_depth: float
    q_min: float
    bistable: bool


# ---------------------------------------------------------------------------
# plane-wave operators


def cos2_expectation(coeffs: np.ndarray) -> float:
    """<cos^2 x> of a normalized plane-wave coefficient vector.

    Equals 1/2 + Re(sum_n conj(c_{n+1}) c_n)/2; the input is renormalized
    (with a warning) if its norm has drifted.
    """
    c = np.asarray(coeffs, dtype=complex)
    norm = float(np.sum(np.abs(c) ** 2))
    if abs(norm - 1.0) > NORM_TOL:
        warnings.warn(f"renormalizing coefficient vector (sum |c_n|^2 = {norm:.3e})", stacklevel=2)
        c = c / math.sqrt(norm)
    return 0.5 + 0.5 * float(np.real(np.vdot(c[1:], c[:-1])))


def apply_cos2(coeffs: np.ndarray) -> np.ndarray:
    """Apply the cos^2 operator: half identity plus quarter index shifts."""
    out = 0.5 * np.asarray(coeffs).copy()
    out[:-1] += 0.25 * coeffs[1:]
    out[1:] += 0.25 * coeffs[:-1]
    return out


def _bloch_diagonals(q_eff: float, depth: float, n_max: int):
    n = np.arange(-n_max, n_max + 1)
    return (2.0 * n + q_eff) ** 2 + 0.5 * depth, np.full(2 * n_max, 0.25 * depth)


def bloch_hamiltonian(q_eff: float, depth: float, n_max: int) -> np.ndarray:
    """Plane-wave matrix of (-i d/dx + q_eff)^2 + depth*cos^2(x).

    Diagonal entries (2n + q_eff)^2 + depth/2, first off-diagonals depth/4.
    """
    if depth < 0:
        raise ParameterError([f"depth must be non-negative, got {depth}"])
    diag, off = _bloch_diagonals(q_eff, depth, n_max)
    h = np.diag(diag)
    idx = np.arange(2 * n_max)
    h[idx, idx + 1] = off
    h[idx + 1, idx] = off
    return h


def _gauge_fix(vectors: np.ndarray) -> np.ndarray:
    """Real entries, sign fixed so the largest-magnitude entry is positive."""
    v = np.real(vectors).copy()
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def band_solve(q: float, depth: float, n_max: int, n_bands: int | None = None) -> BlochBandSolution:
    """Diagonalize the Bloch Hamiltonian; bands sorted ascending.

    Eigenvectors are real (parity gauge) with positive leading component.
    """
    diag, off = _bloch_diagonals(q, depth, n_max)
    if n_bands is None:
        energies, vectors = eigh_tridiagonal(diag, off)
    else:
        energies, vectors = eigh_tridiagonal(
            diag, off, select="i", select_range=(0, n_bands - 1)
        )
    return BlochBandSolution(q=q, depth=depth, energies=energies, vectors=_gauge_fix(vectors))


# ---------------------------------------------------------------------------
# steady states


def _ground_cos2(q: float, depth: float, n_max: int) -> float:
    diag, off = _bloch_diagonals(q, depth, n_max)
    _, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    c = v[:, 0]
    return 0.5 + 0.5 * float(np.dot(c[1:], c[:-1]))


def _intensity_map(p: SystemParams, q: float):
    """The scalar fixed-point map I -> eta^2 / ((delta_c - N u0 g(u0 I))^2 + kappa^2)."""

    def fixed_point(intensity: float) -> float:
        g = _ground_cos2(q, p.u0 * intensity, p.n_max)
        det = p.delta_c - p.n_atoms * p.u0 * g
        return p.eta**2 / (det**2 + p.kappa**2)

    return fixed_point


def intensity_roots(p: SystemParams, q: float, n_grid: int = 400) -> list[float]:
    """All self-consistent photon numbers I at quasimomentum q.

    Roots of I - F(I) found by sign-change bracketing on a dense grid over
    [0, eta^2/kappa^2] (the map's range) followed by Brent refinement.
    """
    fmap = _intensity_map(p, q)
    upper = p.eta**2 / p.kappa**2
    if upper == 0.0:
        return [0.0]
    grid = np.linspace(0.0, upper * (1 + 1e-9), n_grid)
    resid = np.array([i - fmap(i) for i in grid])
    roots = []
    for a, b, ra, rb in zip(grid[:-1], grid[1:], resid[:-1], resid[1:]):
        if ra == 0.0:
            roots.append(a)
        elif ra * rb < 0:
            roots.append(brentq(lambda x: x - fmap(x), a, b, xtol=1e-12 * max(upper, 1.0)))
    if resid[-1] == 0.0:
        roots.append(grid[-1])
    # deduplicate near-identical refinements
    out = []
    for r in sorted(roots):
        if not out or abs(r - out[-1]) > 1e-9 * max(upper, 1.0):
            out.append(r)
    return out


def count_steady_states(p: SystemParams, q: float) -> int:
    """Number of distinct self-consistent photon numbers at q (>= 1)."""
    return max(1, len(intensity_roots(p, q)))


def steady_state(
    p: SystemParams,
    q: float = 0.0,
    branch_seed: float | None = None,
    tol: float = 1e-12,
    max_iter: int = 2000,
) -> SelfConsistentState:
    """Self-consistent steady state at quasimomentum q.

    A damped fixed-point iteration (mixing 0.5) polishes the root of the
    scalar intensity map; in multi-root (bistable) regions the root
    nearest ``branch_seed`` is selected (lowest branch when no seed is
    given).  ``converged`` is False if the iteration cap is reached.
    """
    fmap = _intensity_map(p, q)
    roots = intensity_roots(p, q)
    if branch_seed is None:
        target = roots[0]
    else:
        target = min(roots, key=lambda r: abs(r - branch_seed))

    intensity = target
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        nxt = fmap(intensity)
        if abs(nxt - intensity) <= tol * max(intensity, 1.0):
            intensity = nxt
            converged = True
            break
        intensity = 0.5 * intensity + 0.5 * nxt
    band = band_solve(q, p.u0 * intensity, p.n_max)
    g = cos2_expectation(band.ground().astype(complex))
    alpha = 1j * p.eta / (p.delta_c - p.n_atoms * p.u0 * g + 1j * p.kappa)
    return SelfConsistentState(
        params=p,
        q=q,
        alpha_ss=alpha,
        band=band,
        cos2=g,
        converged=converged,
        iterations=iterations,
    )


def _min_depth_over_q(p: SystemParams, n_q: int = 41) -> tuple[float, float, bool]:
    """(min depth, argmin q, bistable flag) over the Brillouin zone.

    Uses the lowest intensity branch everywhere; a golden-section pass
    refines the minimum between the bracketing grid points.
    """
    qs = np.linspace(-1.0, 1.0, n_q)
    bistable = False

    def depth_at(q: float) -> float:
        nonlocal bistable
        roots = intensity_roots(p, q)
        if len(roots) > 1:
            bistable = True
        return p.u0 * roots[0]

    depths = np.array([depth_at(q) for q in qs])
    k = int(np.argmin(depths))
    lo = qs[max(k - 1, 0)]
    hi = qs[min(k + 1, n_q - 1)]
    # golden-section refinement of the smooth 1-d minimum
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1, c2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = depth_at(c1), depth_at(c2)
    for _ in range(40):
        if b - a < 1e-6:
            break
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = depth_at(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = depth_at(c2)
    qmin = 0.5 * (a + b)
    dmin = min(depths[k], depth_at(qmin))
    return float(dmin), float(qmin), bistable


def calibrate_pump(
    p: SystemParams,
    target_min_depth: float,
    n_q: int = 41,
    rel_tol: float = 1e-3,
) -> PumpCalibration:
    """Pump rate whose minimum-over-q steady-state depth hits the target.

    The minimum over quasimomentum is taken on a grid of ``n_q`` points
    with golden-section refinement; the pump is then inverted with Brent
    to 0.1% (relative) in the depth.  In bistable regions the lowest
    intensity branch defines the depth, and the result is flagged.
    """
    if target_min_depth <= 0:
        raise ParameterError([f"target_min_depth must be positive, got {target_min_depth}"])
    if p.u0 <= 0:
        raise ParameterError(["calibration needs u0 > 0"])

    bistable_seen = False

    def min_depth(eta: float) -> float:
        nonlocal bistable_seen
        d, _, bi = _min_depth_over_q(p.with_updates(eta=eta), n_q=n_q)
        bistable_seen = bistable_seen or bi
        return d

    # decoupled-cavity estimate as the starting scale
    eta0 = math.sqrt(target_min_depth / p.u0 * (p.delta_c**2 + p.kappa**2))
    lo, hi = 0.5 * eta0, 2.0 * eta0
    for _ in range(60):
        if min_depth(lo) < target_min_depth:
            break
        lo *= 0.5
    for _ in range(60):
        if min_depth(hi) > target_min_depth:
            break
        hi *= 2.0
    eta = brentq(
        lambda e: min_depth(e) - target_min_depth,
        lo,
        hi,
        rtol=1e-6,
    )
    dmin, qmin, _ = _min_depth_over_q(p.with_updates(eta=eta), n_q=n_q)
    if abs(dmin - target_min_depth) > rel_tol * target_min_depth:
        raise ConvergenceError(
            f"pump calibration stalled: min depth {dmin} vs target {target_min_depth}"
        )
    return PumpCalibration(
        eta=float(eta), target_min_depth=target_min_depth, q_min=qmin, bistable=bistable_seen
    )


# ---------------------------------------------------------------------------
# dynamics


def _rhs(p: SystemParams):
    n = np.arange(-p.n_max, p.n_max + 1)
    two_n = 2.0 * n

    def rhs(t, y):
        a = y[0]
        c = y[1:]
        g = 0.5 + 0.5 * np.real(np.vdot(c[1:], c[:-1]))
        dadt = -1j * ((-p.delta_c + p.n_atoms * p.u0 * g - 1j * p.kappa) * a + 1j * p.eta)
        depth = p.u0 * (a.real**2 + a.imag**2)
        hc = ((two_n + p.q0 + p.force * t) ** 2 + 0.5 * depth) * c
        hc[:-1] += 0.25 * depth * c[1:]
        hc[1:] += 0.25 * depth * c[:-1]
        return np.concatenate(([dadt], -1j * hc))

    return rhs


def evolve(
    p: SystemParams,
    initial: MeanfieldState | None = None,
    t_end: float | None = None,
    tol: float = 1e-10,
    samples_per_period: int = 256,
) -> MeanfieldTrajectory:
    """Integrate the coupled meanfield equations in the transformed frame.

    Adaptive eighth-order Runge-Kutta with relative tolerance ``tol``;
    the solution is resampled onto a uniform output grid and kept as a
    dense interpolant for downstream consumers.  Aborts if the wave
    function norm drifts beyond 1e-8.
    """
    if tol <= 0:
        raise ParameterError([f"tol must be positive, got {tol}"])
    if initial is None:
        initial = steady_state(p, q=p.q0).as_meanfield_state()
    if initial.n_max != p.n_max:
        raise ParameterError(
            [f"initial state has n_max={initial.n_max}, params have n_max={p.n_max}"]
        )
    if t_end is None:
        if not math.isfinite(p.bloch_period):
            raise ParameterError(["t_end is required when force = 0"])
        t_end = p.bloch_period

    # output sampling: per Bloch period, or per the canonical 8*pi when f = 0
    t_ref = p.bloch_period if math.isfinite(p.bloch_period) else 8.0 * math.pi
    n_out = max(2, int(round(samples_per_period * t_end / t_ref)) + 1)
    grid = np.linspace(0.0, t_end, n_out)

    y0 = np.concatenate(([complex(initial.alpha)], initial.coeffs))
    sol = solve_ivp(
        _rhs(p),
        (0.0, t_end),
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
    )
    if not sol.success:
        raise IntegrationError(f"meanfield integration failed: {sol.message}")
    y_grid = sol.sol(grid)
    coeffs = y_grid[1:].T
    norms = np.sum(np.abs(coeffs) ** 2, axis=1)
    drift = float(np.max(np.abs(norms - 1.0)))
    if drift > NORM_DRIFT_ABORT:
        raise IntegrationError(f"normalization drift {drift:.3e} beyond {NORM_DRIFT_ABORT}")
    return MeanfieldTrajectory(
        params=p, grid=grid, alpha=y_grid[0], coeffs=coeffs, dense=sol.sol
    )


def contrast(traj: MeanfieldTrajectory) -> float:
    """(s_max - s_min)/(s_max + s_min) over whole Bloch periods."""
    t_b = traj.params.bloch_period
    if not math.isfinite(t_b) or traj.span < t_b * (1 - 1e-9):
        raise ParameterError(["trajectory must span at least one Bloch period"])
    n_periods = int(math.floor(traj.span / t_b + 1e-9))
    mask = traj.grid <= traj.grid[0] + n_periods * t_b * (1 + 1e-12)
    s = traj.depth[mask]
    smax, smin = float(np.max(s)), float(np.min(s))
    if smax + smin == 0.0:
        return 0.0
    return (smax - smin) / (smax + smin)


def depth_spectrum(traj: MeanfieldTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """One-sided discrete Fourier transform of the lattice depth.

    Returns (frequencies in units of the Bloch frequency, magnitudes).
    The transform is unitary ("ortho"), so the total power satisfies
    sum(weight * mag^2) = sum(s^2) with weight 2 for interior bins and 1
    for the zero/Nyquist bins.  When the grid spans an integer number of
    Bloch periods the harmonics land exactly on integer frequencies.
    """
    dt = np.diff(traj.grid)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ParameterError(["depth_spectrum requires a uniform grid"])
    # drop the endpoint so an integer number of periods gives exact bins
    s = traj.depth[:-1]
    n = len(s)
    spec = np.fft.rfft(s, norm="ortho")
    freqs_abs = np.fft.rfftfreq(n, d=float(dt[0])) * 2.0 * math.pi
    omega_b = traj.params.omega_b
    if omega_b <= 0:
        omega_b = 1.0  # report absolute angular frequency when f = 0
    return freqs_abs / omega_b, np.abs(spec)


def spectrum_power_weights(n_samples: int) -> np.ndarray:
    """Parseval weights matching :func:`depth_spectrum` (one-sided rfft)."""
    n_bins = n_samples // 2 + 1
    w = np.full(n_bins, 2.0)
    w[0] = 1.0
    if n_samples % 2 == 0:
        w[-1] = 1.0
    return w
