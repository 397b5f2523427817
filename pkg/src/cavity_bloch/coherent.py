"""Independent-oscillator model with a coherent-state cavity.

The atomic fluctuations are expanded in the instantaneous eigenbasis of
the meanfield Hamiltonian and each eigenmode is treated as an oscillator
driven by cavity shot noise: golden-rule up/down rates built from the
Lorentzian shot-noise spectral density give a closed rate equation per
mode.  This drops the atom-light correlations, so it is a weak-coupling
(small beta) approximation of the full linearized dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .meanfield import (
    MeanfieldState,
    MeanfieldTrajectory,
    apply_cos2,
    band_solve,
    bloch_hamiltonian,
)
from .params import SystemParams

__all__ = [
    "OscillatorSet",
    "RateModelResult",
    "oscillator_set",
    "shot_noise_spectrum",
    "evolve_rates",
    "adiabaticity_diagnostic",
]


@dataclass
class OscillatorSet:
    """Instantaneous oscillator data at one meanfield state."""

    energies: np.ndarray  # E_j, ascending
    couplings: np.ndarray  # u_j (complex; enters rates via |u_j|^2 only)
    chemical_potential: float
    shifted: np.ndarray  # omega_j = E_j - mu
    delta_c_eff: float
    nbar: float


@dataclass
class RateModelResult:
    """Per-mode and total excitation numbers from the rate equations."""

    times: np.ndarray
    per_mode: np.ndarray  # (n_times, n_modes)
    total: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.per_mode.shape[1]


def oscillator_set(
    p: SystemParams, state: MeanfieldState, n_modes: int | None = None
) -> OscillatorSet:
    """Eigenbasis couplings of the meanfield-driven atomic fluctuations.

    Couplings are u_j = i sqrt(N) u0 <nu_j | P cos^2 | phi> in the
    instantaneous eigenbasis nu_j; the chemical potential mu = <phi|H|phi>
    shifts the oscillator frequencies, which removes their slow
    Bloch-periodic drift.
    """
    q_eff = state.q0 + p.force * state.t
    depth = p.u0 * float(abs(state.alpha) ** 2)
    band = band_solve(q_eff, depth, p.n_max, n_bands=n_modes)
    c = state.coeffs
    # P cos^2 |phi>: cos^2 image minus its meanfield-direction component
    w = apply_cos2(c) - np.vdot(c, apply_cos2(c)) * c
    couplings = 1j * math.sqrt(p.n_atoms) * p.u0 * (band.vectors.T @ w)
    h = bloch_hamiltonian(q_eff, depth, p.n_max)
    mu = float(np.real(np.vdot(c, h @ c)))
    g2 = float(np.real(np.vdot(c, apply_cos2(c))))
    return OscillatorSet(
        energies=band.energies,
        couplings=couplings,
        chemical_potential=mu,
        shifted=band.energies - mu,
        delta_c_eff=p.delta_c - p.n_atoms * p.u0 * g2,
        nbar=float(abs(state.alpha) ** 2),
    )


def shot_noise_spectrum(omega: float, delta_c_eff: float, kappa: float, nbar: float) -> float:
    """Lorentzian spectral density of the intracavity shot-noise force.

    2*kappa*nbar / ((delta_c_eff + omega)^2 + kappa^2); asymmetric in
    omega whenever the effective detuning is nonzero, which is what makes
    the up and down golden-rule rates differ.
    """
    if kappa <= 0:
        raise ParameterError(["kappa must be positive"])
    if nbar < 0:
        raise ParameterError(["nbar must be non-negative"])
    return 2.0 * kappa * nbar / ((delta_c_eff + omega) ** 2 + kappa**2)


def _rates(osc: OscillatorSet, kappa: float, modes: np.ndarray):
    """(up, down) golden-rule rates for the selected mode indices."""
    u2 = np.abs(osc.couplings[modes]) ** 2
    w = osc.shifted[modes]
    up = u2 * np.array([shot_noise_spectrum(-wj, osc.delta_c_eff, kappa, osc.nbar) for wj in w])
    down = u2 * np.array([shot_noise_spectrum(wj, osc.delta_c_eff, kappa, osc.nbar) for wj in w])
    return up, down


def evolve_rates(
    p: SystemParams,
    traj: MeanfieldTrajectory,
    n_modes: int = 8,
    samples_per_period: int = 64,
    t_end: float | None = None,
) -> RateModelResult:
    """Integrate the per-mode rate equations along a meanfield run.

    d<N_j>/dt = (up_j - down_j) <N_j> + up_j, with rates recomputed on a
    coarse grid (they vary at the Bloch rate, far below the cavity
    linewidth) and held constant over each interval, where the equation
    integrates exactly.  Modes are the lowest ``n_modes`` excited bands
    plus the residual ground-band component left by the projector.
    """
    if t_end is None:
        t_end = traj.span
    t_ref = p.bloch_period if math.isfinite(p.bloch_period) else 8.0 * math.pi
    n_int = max(2, int(math.ceil(samples_per_period * t_end / t_ref)))
    times = np.linspace(0.0, t_end, n_int + 1)
    modes = np.arange(n_modes + 1)  # ground residual + n_modes excited bands

    occ = np.zeros((n_int + 1, len(modes)))
    for k in range(n_int):
        t_mid = 0.5 * (times[k] + times[k + 1])
        h = times[k + 1] - times[k]
        osc = oscillator_set(p, traj.state_at(t_mid), n_modes=len(modes))
        up, down = _rates(osc, p.kappa, modes)
        a = up - down
        n_k = occ[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            grow = np.where(
                np.abs(a) > 1e-300,
                (n_k + up / np.where(np.abs(a) > 1e-300, a, 1.0)) * np.exp(a * h)
                - up / np.where(np.abs(a) > 1e-300, a, 1.0),
                n_k + up * h,
            )
        occ[k + 1] = grow
    return RateModelResult(times=times, per_mode=occ, total=occ.sum(axis=1))


def adiabaticity_diagnostic(
    p: SystemParams, state: MeanfieldState, n_modes: int = 9, threshold: float = 0.1
) -> tuple[np.ndarray, bool]:
    """Size of the neglected adjacent-level drive term, per level pair.

    Evaluates |2 omega_B / (pi * gap) * <nu_j | p | nu_j+1>| for adjacent
    instantaneous eigenstates; values approaching one mean the oscillator
    decoupling breaks down (avoided crossings swept at the Bloch rate).
    Returns (values, any_above_threshold).
    """
    q_eff = state.q0 + p.force * state.t
    depth = p.u0 * float(abs(state.alpha) ** 2)
    band = band_solve(q_eff, depth, p.n_max, n_bands=n_modes + 1)
    momenta = 2.0 * np.arange(-p.n_max, p.n_max + 1) + q_eff
    vals = np.empty(n_modes)
    for j in range(n_modes):
        gap = band.energies[j + 1] - band.energies[j]
        pj = np.dot(band.vectors[:, j], momenta * band.vectors[:, j + 1])
        vals[j] = abs(2.0 * p.omega_b / (math.pi * gap) * pj) if gap != 0 else math.inf
    return vals, bool(np.any(vals > threshold))
