"""Signal-to-noise of the continuous Bloch-frequency measurement.

The measured signal is the cosine transform of the transmitted photon
current over a window T; its variance includes detector shot noise and,
at full fidelity, two-time correlations of the intracavity fluctuations.
Three fidelity levels are provided:

* analytic estimate contrast^2 * rate * T / 2 for a sinusoidal current;
* meanfield + detector shot noise, needing only |alpha(t)|^2;
* full backaction, integrating the two-time fluctuation correlations.

Two structural facts shape the full computation.  First, the free-field
(commutator) part of <da(t1) da+(t2)> cancels the detection-side noise
term exactly: both equal the same propagator entry (an empty cavity must
come out Poissonian), so only normally ordered correlators survive.
Second, the surviving correlators still carry undamped atomic pair
oscillations well above any affordable storage grid, so the double time
integrals are evaluated without a storage grid at all: for each double
integral the inner time is folded into a driven auxiliary vector

    ds/dt = -i M(t) s + cos(w t) * weight(t) * C(t)^T e_j

(the regression evolution with the accumulated earlier-time weight as a
source) and the outer time is a running quadrature of its cavity
components - everything on the fine propagation grid.  The coarse grid
kept in :class:`TwoTimeGrid` only stores correlation samples for
persistence and diagnostics; the variance does not depend on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _steppers as st
from .errors import ParameterError, ResourceError
from .fluctuations import evolve_linear_system
from .meanfield import MeanfieldTrajectory, calibrate_pump, contrast, evolve
from .params import SystemParams, scale_family

__all__ = [
    "SnrResult",
    "TwoTimeGrid",
    "snr_analytic",
    "snr_detector_shot",
    "two_time_grid",
    "snr_full",
    "snr_scan",
    "scan_point",
]


@dataclass
class SnrResult:
    """Signal, variance and their ratio at one evaluation frequency."""

    omega: float
    t_end: float
    signal: float
    variance: float
    snr: float
    mode: str  # analytic | detector_shot | full_backaction
    converged: bool | None = None
    convergence_delta: float | None = None


@dataclass
class TwoTimeGrid:
    """Two-time fluctuation data for one measurement window.

    ``lam[i, j]`` samples the 2x2 cavity block of <R(t_i) R^T(t_j)> for
    j >= i (row index = operator at the earlier argument) and ``xi`` the
    detection-noise correlation <xi_b(t_i) da+(t_j)>; entries with j < i
    follow from conjugation and are never stored.  The variance terms are
    carried as the three accumulated double integrals over t2 > t1 (all
    at the evaluation frequency ``omega``, fine-grid exact):

        normal_upper = II cos cos alpha(t1) conj(alpha(t2)) <da+(t1) da(t2)>
        pair_upper   = II cos cos alpha(t1) alpha(t2)       <da+(t1) da+(t2)>
        anti_upper   = II cos cos conj(alpha(t1)) alpha(t2) <da(t1) da(t2)>

    ``dn`` is the photon fluctuation occupation on the coarse grid.
    """

    times: np.ndarray  # (P,)
    omega: float
    lam: np.ndarray  # (P, P, 2, 2) complex, upper triangle filled
    xi: np.ndarray  # (P, P) complex, upper triangle filled
    alpha: np.ndarray  # (P,) complex
    dn: np.ndarray  # (P,)
    normal_upper: complex
    pair_upper: complex
    anti_upper: complex
    kappa: float

    @property
    def n_points(self) -> int:
        return len(self.times)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def subsampled(self, stride: int) -> "TwoTimeGrid":
        """Every stride-th stored sample (the integrals are not affected)."""
        idx = np.arange(0, self.n_points, stride)
        return TwoTimeGrid(
            times=self.times[idx],
            omega=self.omega,
            lam=self.lam[np.ix_(idx, idx)],
            xi=self.xi[np.ix_(idx, idx)],
            alpha=self.alpha[idx],
            dn=self.dn[idx],
            normal_upper=self.normal_upper,
            pair_upper=self.pair_upper,
            anti_upper=self.anti_upper,
            kappa=self.kappa,
        )


def snr_analytic(contrast_eps: float, rate: float, t_end: float) -> float:
    """contrast^2 * rate * T / 2 for a sinusoidally modulated current."""
    if not (0.0 <= contrast_eps <= 1.0):
        raise ParameterError([f"contrast must be in [0, 1], got {contrast_eps}"])
    if rate < 0 or t_end <= 0:
        raise ParameterError(["rate must be >= 0 and t_end > 0"])
    return contrast_eps**2 * rate * t_end / 2.0


def _window_grid(traj: MeanfieldTrajectory, t_end: float):
    """Quadrature grid over [0, t_end] following the trajectory sampling."""
    if t_end > traj.span * (1 + 1e-12):
        raise ParameterError([f"t_end={t_end} exceeds trajectory span {traj.span}"])
    mask = traj.grid <= t_end * (1 + 1e-12)
    ts = traj.grid[mask]
    intens = np.abs(traj.alpha[mask]) ** 2
    if ts[-1] < t_end * (1 - 1e-12):
        y = traj.dense(t_end)
        ts = np.append(ts, t_end)
        intens = np.append(intens, abs(y[0]) ** 2)
    return ts, intens


def _meanfield_integrals(traj: MeanfieldTrajectory, omega: float, t_end: float):
    ts, intens = _window_grid(traj, t_end)
    cos_w = np.cos(omega * ts)
    return (
        float(np.trapezoid(cos_w * intens, ts)),
        float(np.trapezoid(cos_w**2 * intens, ts)),
    )


def snr_detector_shot(traj: MeanfieldTrajectory, omega: float, t_end: float) -> SnrResult:
    """Meanfield signal against detector shot noise.

    signal = kappa * int cos(w t) |alpha|^2, variance = kappa * int
    cos^2(w t) |alpha|^2, quadrature on the trajectory grid.
    """
    kappa = traj.params.kappa
    sig_i, var_i = _meanfield_integrals(traj, omega, t_end)
    signal = kappa * sig_i
    variance = kappa * var_i
    return SnrResult(
        omega=omega,
        t_end=t_end,
        signal=signal,
        variance=variance,
        snr=signal**2 / variance,
        mode="detector_shot",
    )


class _TwoTimePassenger:
    """Two-time machinery riding on the fluctuation fine stepping.

    Carries (i) homogeneous regression columns spawned at the coarse
    storage times (three per spawn: the two covariance-row seeds and the
    detection-noise seed), (ii) the two driven vectors that fold the
    inner time of the variance double integrals, and (iii) the running
    outer quadratures of their cavity components.
    """

    def __init__(self, dim: int, times: np.ndarray, omega: float, sqk_half: float):
        self.dim = dim
        self.times = times
        self.omega = omega
        self.sqk_half = sqk_half
        n = len(times)
        self.lam = np.zeros((n, n, 2, 2), dtype=complex)
        self.xi = np.zeros((n, n), dtype=complex)
        self.alpha_coarse = np.zeros(n, dtype=complex)
        self.columns = np.zeros((dim, 0), dtype=complex)
        self.driven = np.zeros((dim, 2), dtype=complex)  # [s_normal, s_anti]
        self.normal_upper = 0.0 + 0.0j
        self.pair_upper = 0.0 + 0.0j
        self.anti_upper = 0.0 + 0.0j
        self._src_prev: np.ndarray | None = None  # (dim, 2)
        self._read_prev: np.ndarray | None = None  # (3,)

    # -- source and readout helpers

    def _source(self, t: float, alpha: complex, cov: np.ndarray) -> np.ndarray:
        cw = math.cos(self.omega * t)
        src = np.empty((self.dim, 2), dtype=complex)
        src[:, 0] = (cw * alpha) * cov[1, :]  # seeds <da+(t1) R(t)>
        src[:, 1] = (cw * np.conj(alpha)) * cov[0, :]  # seeds <da(t1) R(t)>
        return src

    def _readout(self, t: float, alpha: complex) -> np.ndarray:
        cw = math.cos(self.omega * t)
        return np.array(
            [
                cw * np.conj(alpha) * self.driven[0, 0],  # normal: <da+ da>
                cw * alpha * self.driven[1, 0],  # pair: <da+ da+>
                cw * alpha * np.conj(self.driven[0, 1]),  # anti: conj(<da da>)
            ]
        )

    # -- passenger protocol

    def start(self, t: float, alpha: complex, cov: np.ndarray) -> None:
        self._src_prev = self._source(t, alpha, cov)
        self._read_prev = self._readout(t, alpha)

    def fine_step(self, kernel, t0, t1, alpha0, alpha1, cov) -> None:
        h = t1 - t0
        (e1, _), (e2, _) = kernel.exps
        if self.columns.shape[1]:
            self.columns = e2 @ (e1 @ self.columns)
        # driven vectors: homogeneous step plus trapezoidal source
        src_new = self._source(t1, alpha1, cov)
        self.driven = e2 @ (e1 @ (self.driven + 0.5 * h * self._src_prev)) + 0.5 * h * src_new
        self._src_prev = src_new
        # outer quadrature of the cavity components
        read_new = self._readout(t1, alpha1)
        inc = 0.5 * h * (self._read_prev + read_new)
        self.normal_upper += inc[0]
        self.pair_upper += inc[1]
        self.anti_upper += inc[2]
        self._read_prev = read_new

    def snapshot(self, k: int, t: float, cov: np.ndarray) -> None:
        cols = self.columns
        for owner in range(k):  # columns sit in spawn order, three per owner
            base = 3 * owner
            self.lam[owner, k, 0, 0] = cols[0, base]
            self.lam[owner, k, 0, 1] = cols[1, base]
            self.lam[owner, k, 1, 0] = cols[0, base + 1]
            self.lam[owner, k, 1, 1] = cols[1, base + 1]
            self.xi[owner, k] = cols[1, base + 2]
        self.lam[k, k] = cov[:2, :2]
        self.xi[k, k] = self.sqk_half
        seed = np.zeros((self.dim, 3), dtype=complex)
        seed[:, 0] = cov[0, :]
        seed[:, 1] = cov[1, :]
        seed[1, 2] = self.sqk_half
        self.columns = np.hstack([self.columns, seed])


def two_time_grid(
    p: SystemParams,
    traj: MeanfieldTrajectory,
    t_end: float | None = None,
    omega: float | None = None,
    coarse_per_period: float = 32,
    step_bound: float = 0.3,
    memory_budget_mb: float = 4096.0,
    check: bool = False,
) -> tuple[TwoTimeGrid, "FluctuationRun"]:
    """Evolve the two-time correlations over a measurement window.

    The coarse grid holds cavity-sector correlation samples (regression
    columns spawned at every coarse time); the variance double integrals
    are folded through driven auxiliary vectors on the fine grid at the
    evaluation frequency ``omega`` (the Bloch frequency by default).
    """
    from .fluctuations import FluctuationRun  # noqa: F401  (return type)

    if t_end is None:
        t_end = traj.span
    if omega is None:
        omega = p.omega_b
    t_ref = p.bloch_period if math.isfinite(p.bloch_period) else 8.0 * math.pi
    n_coarse = max(2, int(round(coarse_per_period * t_end / t_ref)))
    times = np.linspace(0.0, t_end, n_coarse + 1)
    n_pts = len(times)

    dim = p.fluctuation_dim
    need_mb = (n_pts * n_pts * 5 * 16 + dim * (3 * n_pts + 2) * 16 + 3 * dim * dim * 16) / 1e6
    if need_mb > memory_budget_mb:
        raise ResourceError(
            f"two-time storage needs about {need_mb:.0f} MB, budget is {memory_budget_mb:.0f} MB"
        )

    passenger = _TwoTimePassenger(dim, times, float(omega), math.sqrt(p.kappa) / 2.0)
    passenger.alpha_coarse = np.array([traj.dense(t)[0] for t in times])
    run = evolve_linear_system(
        p,
        traj,
        t_end=t_end,
        snapshot_times=times,
        step_bound=step_bound,
        check=check,
        store_covariances=False,
        store_matrices=False,
        passenger=passenger,
    )
    grid = TwoTimeGrid(
        times=times,
        omega=float(omega),
        lam=passenger.lam,
        xi=passenger.xi,
        alpha=passenger.alpha_coarse,
        dn=run.photon_occupation,
        normal_upper=complex(passenger.normal_upper),
        pair_upper=complex(passenger.pair_upper),
        anti_upper=complex(passenger.anti_upper),
        kappa=p.kappa,
    )
    return grid, run


def _variance_terms(grid: TwoTimeGrid, traj: MeanfieldTrajectory):
    """(signal, variance) for the full-backaction estimate.

    The free-field commutator part of the anti-normally ordered cavity
    correlator cancels the detection-noise term exactly (an empty cavity
    is Poissonian), so the variance holds only normally ordered pieces:

        var = kappa (int cos^2 (|alpha|^2 + dn))
            + 4 kappa^2 Re[normal_upper]
            + 2 kappa^2 Re[pair_upper + conj(anti_upper)]
    """
    kappa = grid.kappa
    omega = grid.omega
    ts = grid.times
    sig_mf, var_mf = _meanfield_integrals(traj, omega, grid.t_end)
    cos_c = np.cos(omega * ts)
    sig_fluct = float(np.trapezoid(cos_c * grid.dn, ts))
    var_fluct = float(np.trapezoid(cos_c**2 * grid.dn, ts))
    signal = kappa * (sig_mf + sig_fluct)
    variance = (
        kappa * (var_mf + var_fluct)
        + 4.0 * kappa**2 * grid.normal_upper.real
        + 2.0 * kappa**2 * (grid.pair_upper + np.conj(grid.anti_upper)).real
    )
    return signal, variance


def snr_full(
    grid: TwoTimeGrid,
    traj: MeanfieldTrajectory,
    omega: float | None = None,
    t_end: float | None = None,
    control_grid: TwoTimeGrid | None = None,
    convergence_limit: float = 0.05,
) -> SnrResult:
    """Full-backaction signal-to-noise from an accumulated window.

    Evaluated at the grid's own frequency and window (the double
    integrals were accumulated for those).  When a ``control_grid`` from
    a coarser time discretization is supplied, the relative shift between
    the two estimates becomes the convergence diagnostic.
    """
    if omega is not None and abs(omega - grid.omega) > 1e-12 * max(1.0, abs(grid.omega)):
        raise ParameterError(
            [f"grid was accumulated at omega={grid.omega}, cannot evaluate at {omega}"]
        )
    if t_end is not None and abs(t_end - grid.t_end) > 1e-9 * max(1.0, grid.t_end):
        raise ParameterError([f"grid covers t_end={grid.t_end}, cannot evaluate at {t_end}"])
    signal, variance = _variance_terms(grid, traj)
    if variance <= 0:
        raise ParameterError([f"non-positive variance {variance}; window too coarse"])
    snr = signal**2 / variance
    converged = None
    delta = None
    if control_grid is not None:
        sig2, var2 = _variance_terms(control_grid, traj)
        snr2 = sig2**2 / var2 if var2 > 0 else math.inf
        delta = float(abs(snr2 - snr) / max(abs(snr), 1e-300))
        converged = bool(delta < convergence_limit)
    return SnrResult(
        omega=grid.omega,
        t_end=grid.t_end,
        signal=signal,
        variance=variance,
        snr=snr,
        mode="full_backaction",
        converged=converged,
        convergence_delta=delta,
    )


# ---------------------------------------------------------------------------
# parameter scans


def _scan_point_params(p: SystemParams, axis: str, value: float, target_min_depth: float):
    """Parameters (recalibrated pump included) for one scan point."""
    if axis == "beta":
        pb = p.with_updates(u0=float(value) * p.kappa / p.n_atoms)
        cal = calibrate_pump(pb, target_min_depth)
        return pb.with_updates(eta=cal.eta), cal
    if axis == "depth":
        cal = calibrate_pump(p, float(value))
        return p.with_updates(eta=cal.eta), cal
    if axis == "n_atoms":
        base = calibrate_pump(p, target_min_depth)
        scaled = scale_family(p.with_updates(eta=base.eta), p.n_atoms / float(value))
        return scaled, base
    raise ParameterError([f"unknown scan axis '{axis}'"])


def scan_point(
    p: SystemParams,
    axis: str,
    value: float,
    t_end: float,
    omega: float | None = None,
    modes: tuple[str, ...] = ("detector_shot", "full_backaction"),
    target_min_depth: float = 3.0,
    coarse_per_period: float = 32,
    step_bound: float = 0.3,
    tol: float = 1e-10,
    samples_per_period: int = 512,
    convergence_check: bool = True,
) -> dict:
    """Evaluate the requested SNR modes at one scan point.

    The full-backaction estimate is recomputed on a doubled fine step as
    its convergence control (the accumulation grid is the fine grid).
    """
    pp, cal = _scan_point_params(p, axis, value, target_min_depth)
    if omega is None:
        omega = pp.omega_b
    traj = evolve(pp, t_end=t_end, tol=tol, samples_per_period=samples_per_period)
    row = {
        "axis": axis,
        "value": float(value),
        "eta": pp.eta,
        "beta": pp.beta,
        "omega": float(omega),
        "t_end": float(t_end),
        "contrast": contrast(traj) if math.isfinite(pp.bloch_period) else 0.0,
        "bistable_calibration": cal.bistable,
        "results": {},
    }
    if "detector_shot" in modes:
        res = snr_detector_shot(traj, omega, t_end)
        row["results"]["detector_shot"] = _result_dict(res)
    if "full_backaction" in modes:
        grid, _ = two_time_grid(
            pp,
            traj,
            t_end=t_end,
            omega=omega,
            coarse_per_period=coarse_per_period,
            step_bound=step_bound,
        )
        control = None
        if convergence_check:
            control, _ = two_time_grid(
                pp,
                traj,
                t_end=t_end,
                omega=omega,
                coarse_per_period=coarse_per_period,
                step_bound=2.0 * step_bound,
            )
        res = snr_full(grid, traj, control_grid=control)
        row["results"]["full_backaction"] = _result_dict(res)
    return row


def _result_dict(res: SnrResult) -> dict:
    return {
        "signal": res.signal,
        "variance": res.variance,
        "snr": res.snr,
        "converged": res.converged,
        "convergence_delta": res.convergence_delta,
    }


def snr_scan(
    p: SystemParams,
    axis: str,
    values,
    t_end: float,
    omega: float | None = None,
    modes: tuple[str, ...] = ("detector_shot", "full_backaction"),
    target_min_depth: float = 3.0,
    coarse_per_period: float = 32,
    step_bound: float = 0.3,
    point_hook=None,
) -> list[dict]:
    """SNR table over beta, minimum depth, or atom number.

    Each point recalibrates the pump (beta and depth axes) or rescales
    within the family (atom-number axis), runs the meanfield window, and
    evaluates the requested fidelity modes.  Failures are flagged on the
    row and the scan continues.  ``point_hook(row)`` runs after each
    point (checkpointing).
    """
    rows = []
    for value in np.atleast_1d(values):
        try:
            row = scan_point(
                p,
                axis,
                float(value),
                t_end,
                omega=omega,
                modes=modes,
                target_min_depth=target_min_depth,
                coarse_per_period=coarse_per_period,
                step_bound=step_bound,
            )
        except Exception as exc:  # noqa: BLE001 - per-point failures are data
            row = {"axis": axis, "value": float(value), "failed": True, "error": str(exc)}
        rows.append(row)
        if point_hook is not None:
            point_hook(row)
    return rows
