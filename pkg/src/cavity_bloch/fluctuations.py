"""Linearized quantum fluctuations driven by cavity Langevin noise.

The fluctuation vector is R = (da, da+, dc, dc+) with dc the plane-wave
components of the atomic field orthogonal to the meanfield; its dimension
is 2 + 2K with K = 2*n_max + 1.  The generator M(t) is assembled from the
instantaneous meanfield; the only noise source is the cavity vacuum
input, entering the second moments as a single diffusion entry 2*kappa at
the (da, da+) position.

Second moments <R_j R_k> are propagated along two routes:

* production: the differential form dC/dt = -i(M C + C M^T) + D solved
  with fourth-order commutator-free exponentials and exact per-step
  diffusion increments;
* cross-check: an explicit propagator G(t, 0) stepped by per-interval
  midpoint exponentials with the accumulated source
  Q = int G(t,tau) D G(t,tau)^T dtau, giving C = G C(0) G^T + Q.

Disagreement between the two flags a step grid too coarse for the drive.

Block conventions, used everywhere downstream: index 0 = da, 1 = da+,
2..2+K-1 = dc, 2+K..2+2K-1 = dc+.  Transposes in the second-moment
algebra are plain transposes, never conjugate transposes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _steppers as st
from .errors import IntegrationError, ParameterError
from .meanfield import MeanfieldState, MeanfieldTrajectory, apply_cos2, bloch_hamiltonian
from .params import SystemParams

__all__ = [
    "FluctuationMatrix",
    "Propagator",
    "CovarianceMatrix",
    "FluctuationRun",
    "projector_matrix",
    "build_fluctuation_matrix",
    "vacuum_covariance",
    "evolve_linear_system",
    "occupations",
    "commutator_residual",
    "heating_onset",
    "block_slices",
    "swap_residual",
    "pairing_residual",
    "zero_mode_residual",
]


@dataclass
class FluctuationMatrix:
    """Generator M(t) of the linearized dynamics at one time."""

    m: np.ndarray
    t: float

    @property
    def dim(self) -> int:
        return self.m.shape[0]


@dataclass
class Propagator:
    """G(t, t0) solving dG/dt = -i M(t) G, G(t0, t0) = 1."""

    g: np.ndarray
    t: float
    t0: float = 0.0


@dataclass
class CovarianceMatrix:
    """Equal-time second moments C_jk = <R_j R_k>."""

    c: np.ndarray
    t: float


def block_slices(n_max: int):
    """(a, a+, c, c+) index slices for the 2+2K layout."""
    k = 2 * n_max + 1
    return 0, 1, slice(2, 2 + k), slice(2 + k, 2 + 2 * k)


def projector_matrix(state: MeanfieldState) -> np.ndarray:
    """P = 1 - |phi><phi| in the plane-wave basis (hermitian, idempotent)."""
    c = state.coeffs
    return np.eye(len(c), dtype=complex) - np.outer(c, np.conj(c))


def _assemble(
    p: SystemParams, t: float, alpha: complex, coeffs: np.ndarray, q0: float | None = None
) -> np.ndarray:
    """Build M(t) from the instantaneous meanfield.

    The atomic diagonal block is H(t) composed with the projector on the
    *input* side, H (1 - |phi><phi|): on the physical (orthogonal)
    subspace this acts exactly as H, it annihilates the meanfield
    direction, and it transports the projected commutator identically to
    the continuum equations.  The coupling rows/columns carry the
    projected vector w = P cos^2 phi.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = c / math.sqrt(float(np.sum(np.abs(c) ** 2)))  # interpolated samples jitter
    k = len(c)
    cc = apply_cos2(c)
    g2 = float(np.real(np.vdot(c, cc)))
    a_coef = -p.delta_c + p.n_atoms * p.u0 * g2 - 1j * p.kappa
    w = cc - g2 * c  # P (cos^2 phi): the cos^2 image minus its meanfield component
    q_eff = (p.q0 if q0 is None else q0) + p.force * t
    depth = p.u0 * float(abs(alpha) ** 2)
    h = bloch_hamiltonian(q_eff, depth, (k - 1) // 2)
    hc = h @ c
    hp = h.astype(complex) - np.outer(hc, np.conj(c))  # H (1 - |phi><phi|)

    dim = 2 + 2 * k
    m = np.zeros((dim, dim), dtype=complex)
    s = math.sqrt(p.n_atoms) * p.u0
    ia, iad, sc, scd = block_slices((k - 1) // 2)
    m[ia, ia] = a_coef
    m[iad, iad] = -np.conj(a_coef)
    m[ia, sc] = s * alpha * np.conj(w)
    m[ia, scd] = s * alpha * w
    m[iad, sc] = -s * np.conj(alpha) * np.conj(w)
    m[iad, scd] = -s * np.conj(alpha) * w
    m[sc, ia] = s * np.conj(alpha) * w
    m[sc, iad] = s * alpha * w
    m[scd, ia] = -s * np.conj(alpha) * np.conj(w)
    m[scd, iad] = -s * alpha * np.conj(w)
    m[sc, sc] = hp
    m[scd, scd] = -np.conj(hp)
    return m


def _assemble_batch(p: SystemParams, ts: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_assemble` over a batch of sample times.

    ``ys`` has shape (1+K, n) as returned by the dense meanfield
    interpolant; the result is (n, 2+2K).
    """
    n = len(ts)
    alpha = ys[0]
    c = ys[1:].T  # (n, K)
    c = c / np.sqrt(np.sum(np.abs(c) ** 2, axis=1))[:, None]
    k = c.shape[1]
    n_max = (k - 1) // 2
    cc = 0.5 * c.copy()
    cc[:, :-1] += 0.25 * c[:, 1:]
    cc[:, 1:] += 0.25 * c[:, :-1]
    g2 = np.real(np.einsum("nk,nk->n", np.conj(c), cc))
    a_coef = -p.delta_c + p.n_atoms * p.u0 * g2 - 1j * p.kappa
    w = cc - g2[:, None] * c
    q_eff = p.q0 + p.force * ts
    depth = p.u0 * np.abs(alpha) ** 2
    modes = 2.0 * np.arange(-n_max, n_max + 1)
    diag = (modes[None, :] + q_eff[:, None]) ** 2 + 0.5 * depth[:, None]
    hc = diag * c
    hc[:, :-1] += 0.25 * depth[:, None] * c[:, 1:]
    hc[:, 1:] += 0.25 * depth[:, None] * c[:, :-1]

    dim = 2 + 2 * k
    m = np.zeros((n, dim, dim), dtype=complex)
    sc = slice(2, 2 + k)
    scd = slice(2 + k, 2 + 2 * k)
    # atomic diagonal block H (1 - |phi><phi|) and its negated conjugate
    hp = -np.einsum("ni,nj->nij", hc, np.conj(c))
    idx = np.arange(k)
    hp[:, idx, idx] += diag
    hp[:, idx[:-1], idx[:-1] + 1] += 0.25 * depth[:, None]
    hp[:, idx[1:], idx[1:] - 1] += 0.25 * depth[:, None]
    m[:, sc, sc] = hp
    m[:, scd, scd] = -np.conj(hp)
    s = math.sqrt(p.n_atoms) * p.u0
    m[:, 0, 0] = a_coef
    m[:, 1, 1] = -np.conj(a_coef)
    m[:, 0, sc] = s * alpha[:, None] * np.conj(w)
    m[:, 0, scd] = s * alpha[:, None] * w
    m[:, 1, sc] = -s * np.conj(alpha)[:, None] * np.conj(w)
    m[:, 1, scd] = -s * np.conj(alpha)[:, None] * w
    m[:, sc, 0] = s * np.conj(alpha)[:, None] * w
    m[:, sc, 1] = s * alpha[:, None] * w
    m[:, scd, 0] = -s * np.conj(alpha)[:, None] * np.conj(w)
    m[:, scd, 1] = -s * alpha[:, None] * np.conj(w)
    return m


def build_fluctuation_matrix(p: SystemParams, state: MeanfieldState) -> FluctuationMatrix:
    """Fluctuation generator for a meanfield state (transformed frame).

    The quasimomentum is taken from the state itself, so steady-state
    diagnostics away from the run's initial quasimomentum see the right
    Bloch Hamiltonian.
    """
    if state.n_max != p.n_max:
        raise ParameterError(
            [f"state has n_max={state.n_max}, params have n_max={p.n_max}"]
        )
    return FluctuationMatrix(
        m=_assemble(p, state.t, state.alpha, state.coeffs, q0=state.q0), t=state.t
    )


def vacuum_covariance(state: MeanfieldState) -> CovarianceMatrix:
    """Second moments of the vacuum: <da da+> = 1, <dc dc+> = P, rest zero."""
    k = len(state.coeffs)
    dim = 2 + 2 * k
    c = np.zeros((dim, dim), dtype=complex)
    ia, iad, sc, scd = block_slices((k - 1) // 2)
    c[ia, iad] = 1.0
    c[sc, scd] = projector_matrix(state)
    return CovarianceMatrix(c=c, t=state.t)


# ---------------------------------------------------------------------------
# structural diagnostics


def swap_residual(m: np.ndarray) -> float:
    """Max-norm of T M T + conj(M) under the particle/antiparticle swap."""
    k = (m.shape[0] - 2) // 2
    swapped = m.copy()
    perm = np.concatenate(([1, 0], np.arange(2 + k, 2 + 2 * k), np.arange(2, 2 + k)))
    swapped = swapped[np.ix_(perm, perm)]
    return float(np.abs(swapped + np.conj(m)).max())


def pairing_residual(m: np.ndarray) -> float:
    """How far the spectrum is from closure under lambda -> -conj(lambda)."""
    ev = np.linalg.eigvals(m)
    return float(np.abs(ev[:, None] + np.conj(ev)[None, :]).min(axis=1).max())


def zero_mode_residual(m: np.ndarray, state: MeanfieldState) -> float:
    """Max-norm of M applied to the two meanfield-direction null vectors."""
    k = len(state.coeffs)
    z1 = np.zeros(m.shape[0], dtype=complex)
    z1[2 : 2 + k] = state.coeffs
    z2 = np.zeros(m.shape[0], dtype=complex)
    z2[2 + k :] = np.conj(state.coeffs)
    return float(max(np.abs(m @ z1).max(), np.abs(m @ z2).max()))


# ---------------------------------------------------------------------------
# occupations and accuracy measures


def occupations(c: CovarianceMatrix | np.ndarray, state: MeanfieldState) -> tuple[float, float]:
    """(dn, dN): photon and atomic fluctuation occupations from C.

    dn is the normally ordered <da+ da> entry; dN is the trace of the
    <dc+ dc> block.  Values must be real and non-negative within 1e-8,
    otherwise the integration is deemed to have failed.
    """
    cm = c.c if isinstance(c, CovarianceMatrix) else c
    k = len(state.coeffs)
    dn = complex(cm[1, 0])
    d_atoms = complex(np.trace(cm[2 + k :, 2 : 2 + k]))
    for name, val in (("dn", dn), ("dN", d_atoms)):
        tol = 1e-8 * max(1.0, abs(val))
        if abs(val.imag) > tol or val.real < -tol:
            raise IntegrationError(f"occupation {name} = {val} is not real non-negative")
    return max(dn.real, 0.0), max(d_atoms.real, 0.0)


def commutator_residual(c: CovarianceMatrix | np.ndarray, state: MeanfieldState) -> float:
    """Deviation of C from the canonical commutators.

    Checks <dc dc+> - <dc+ dc>^T = P(t) (projected atomic commutator) and
    <da da+> - <da+ da> = 1; returns the worst max-norm deviation.
    """
    cm = c.c if isinstance(c, CovarianceMatrix) else c
    k = len(state.coeffs)
    atom = cm[2 : 2 + k, 2 + k :] - cm[2 + k :, 2 : 2 + k].T - projector_matrix(state)
    cav = cm[0, 1] - cm[1, 0] - 1.0
    return float(max(np.abs(atom).max(), abs(cav)))


# ---------------------------------------------------------------------------
# time evolution


@dataclass
class FluctuationRun:
    """Snapshots and diagnostics of one linearized-noise evolution."""

    params: SystemParams
    times: np.ndarray
    photon_occupation: np.ndarray  # dn(t)
    atom_occupation: np.ndarray  # dN(t)
    commutator_residuals: np.ndarray
    fine_dt: float
    covariances: list[CovarianceMatrix] = field(default_factory=list)
    matrices: list[FluctuationMatrix] = field(default_factory=list)
    propagators: list[Propagator] = field(default_factory=list)
    dual_residuals: np.ndarray | None = None

    @property
    def max_dual_residual(self) -> float:
        if self.dual_residuals is None:
            raise ValueError("run was made without the cross-check path")
        return float(np.max(self.dual_residuals[1:])) if len(self.dual_residuals) > 1 else 0.0


def evolve_linear_system(
    p: SystemParams,
    traj: MeanfieldTrajectory,
    c0: CovarianceMatrix | None = None,
    *,
    t_end: float | None = None,
    snapshots_per_period: float = 16,
    step_bound: float = 0.3,
    check: bool = True,
    diffusion_on: bool = True,
    store_covariances: bool = True,
    store_matrices: bool = True,
    store_propagators: bool = False,
    snapshot_times: np.ndarray | None = None,
    fine_dt: float | None = None,
    passenger=None,
) -> FluctuationRun:
    """Propagate the fluctuation second moments along a meanfield run.

    The fine step is ``step_bound / kappa``: the cavity linewidth is the
    stiff scale, and the exponential stepping needs only to resolve the
    slow Bloch-rate variation of M(t).  Snapshots (covariance, generator,
    occupations, diagnostics) are recorded ``snapshots_per_period`` times
    per Bloch period or on an explicit ``snapshot_times`` grid.

    A ``passenger`` rides along the same fine steps (used for two-time
    correlations).  It may define any of:

    * ``start(t, alpha, cov)`` - once, before stepping;
    * ``fine_step(kernel, t0, t1, alpha0, alpha1, cov)`` - after every
      fine step, with the covariance already advanced to t1;
    * ``snapshot(k, t, cov)`` - at every snapshot, after recording.
    """
    if traj.dense is None:
        raise ParameterError(["trajectory must carry a dense interpolant"])
    if t_end is None:
        t_end = traj.span
    if t_end > traj.span * (1 + 1e-12):
        raise ParameterError([f"t_end={t_end} exceeds trajectory span {traj.span}"])

    if snapshot_times is None:
        t_ref = p.bloch_period if math.isfinite(p.bloch_period) else 8.0 * math.pi
        n_snap = max(1, int(round(snapshots_per_period * t_end / t_ref)))
        snapshot_times = np.linspace(0.0, t_end, n_snap + 1)
    else:
        snapshot_times = np.asarray(snapshot_times, dtype=float)
        if snapshot_times[0] != 0.0:
            raise ParameterError(["snapshot grid must start at t = 0"])

    state0 = traj.state_at(0.0)
    if c0 is None:
        c0 = vacuum_covariance(state0)
    cov = st.CovarianceState(c0.c)
    prop = st.PropagatorState(c0.c) if check else None
    diffusion = 2.0 * p.kappa if diffusion_on else 0.0
    dt_target = fine_dt if fine_dt is not None else step_bound / p.kappa

    n_snap = len(snapshot_times)
    dn = np.zeros(n_snap)
    d_atoms = np.zeros(n_snap)
    comm = np.zeros(n_snap)
    dual = np.zeros(n_snap) if check else None
    covariances: list[CovarianceMatrix] = []
    matrices: list[FluctuationMatrix] = []
    propagators: list[Propagator] = []

    def record(k: int, t: float):
        state_t = traj.state_at(t)
        dn[k], d_atoms[k] = occupations(cov.c, state_t)
        comm[k] = commutator_residual(cov.c, state_t)
        if check:
            c_check = prop.covariance()
            dual[k] = float(
                np.linalg.norm(cov.c - c_check) / max(np.linalg.norm(cov.c), 1e-300)
            )
        if store_covariances:
            covariances.append(CovarianceMatrix(c=cov.c.copy(), t=t))
        if store_matrices:
            matrices.append(FluctuationMatrix(m=_assemble(p, t, *_state_parts(traj, t)), t=t))
        if store_propagators and check:
            propagators.append(Propagator(g=prop.g.copy(), t=t))
        if passenger is not None and hasattr(passenger, "snapshot"):
            passenger.snapshot(k, t, cov.c)

    has_fine = passenger is not None and hasattr(passenger, "fine_step")
    if passenger is not None and hasattr(passenger, "start"):
        y0 = traj.dense(snapshot_times[0])
        passenger.start(float(snapshot_times[0]), complex(y0[0]), cov.c)
    record(0, snapshot_times[0])
    alpha_prev = complex(traj.dense(snapshot_times[0])[0]) if has_fine else None
    chunk = 48  # fine steps whose exponentials are batched together
    for k in range(n_snap - 1):
        t0, t1 = snapshot_times[k], snapshot_times[k + 1]
        n_sub = max(1, int(math.ceil((t1 - t0) / dt_target)))
        h = (t1 - t0) / n_sub
        for start in range(0, n_sub, chunk):
            nb = min(chunk, n_sub - start)
            base = t0 + h * (start + np.arange(nb))
            samples = [base + st.GAUSS_NODE_1 * h, base + st.GAUSS_NODE_2 * h]
            if check:
                samples.append(base + 0.5 * h)
            ts = np.concatenate(samples)
            mats = _assemble_batch(p, ts, traj.dense(ts))
            m1, m2 = mats[:nb], mats[nb : 2 * nb]
            gens = [
                -1j * h * (st.CF4_A1 * m1 + st.CF4_A2 * m2),
                -1j * h * (st.CF4_A2 * m1 + st.CF4_A1 * m2),
            ]
            strengths = [0.5 * diffusion * h, 0.5 * diffusion * h]
            if check:
                gens.append(-1j * h * mats[2 * nb :])
                strengths.append(diffusion * h)
            gens = np.concatenate(gens)
            exps = st.expm_batch(gens)
            sources = (
                st.diffusion_batch(gens, np.repeat(strengths, nb))
                if diffusion
                else [None] * len(gens)
            )
            if has_fine:
                alphas_end = traj.dense(base + h)[0]
            for j in range(nb):
                kernel = st.StepKernel(
                    [(exps[j], sources[j]), (exps[nb + j], sources[nb + j])],
                    check=(exps[2 * nb + j], sources[2 * nb + j]) if check else None,
                )
                cov.step(kernel)
                if prop is not None:
                    prop.step(kernel)
                if has_fine:
                    alpha_new = complex(alphas_end[j])
                    passenger.fine_step(
                        kernel, float(base[j]), float(base[j] + h), alpha_prev, alpha_new, cov.c
                    )
                    alpha_prev = alpha_new
        record(k + 1, t1)

    return FluctuationRun(
        params=p,
        times=snapshot_times,
        photon_occupation=dn,
        atom_occupation=d_atoms,
        commutator_residuals=comm,
        fine_dt=dt_target,
        covariances=covariances,
        matrices=matrices,
        propagators=propagators,
        dual_residuals=dual,
    )


def _state_parts(traj: MeanfieldTrajectory, t: float):
    y = traj.dense(t)
    return y[0], y[1:]


def heating_onset(
    times: np.ndarray,
    atom_occupation: np.ndarray,
    bloch_period: float,
    rel_tol: float = 5e-3,
    growth_floor: float = 0.02,
) -> float | None:
    """Earliest time after which the per-period growth of dN is constant.

    Splits the series into Bloch periods, measures the increase over each,
    and returns the end of the first period from which all later
    increments agree with their mean to ``rel_tol`` (relative).  Series
    whose late increments have collapsed below ``growth_floor`` times the
    largest increment (saturation, not linear growth) yield None, as do
    series that never settle.
    """
    times = np.asarray(times, dtype=float)
    vals = np.asarray(atom_occupation, dtype=float)
    span = times[-1] - times[0]
    n_periods = int(math.floor(span / bloch_period + 1e-9))
    if n_periods < 10:
        raise ParameterError(["heating_onset needs a series spanning >= 10 Bloch periods"])
    bounds = times[0] + bloch_period * np.arange(n_periods + 1)
    at_bounds = np.interp(bounds, times, vals)
    increments = np.diff(at_bounds)
    biggest = float(np.abs(increments).max())
    if biggest == 0.0:
        return None
    for k0 in range(n_periods - 2):
        tail = increments[k0:]
        mean = float(np.mean(tail))
        if mean <= growth_floor * biggest:
            continue
        if np.all(np.abs(tail - mean) <= rel_tol * abs(mean)):
            return float(bounds[k0 + 1])
    return None
