"""Quasiparticle spectra of the fluctuation generator.

Eigenpairs of the non-normal M come with distinct left and right
eigenvectors; the left set (rows of the inverse right-eigenvector matrix)
is biorthonormal to the right set and defines mode occupation numbers as
quadratic forms of the covariance matrix.  Modes are classified by their
cavity weight and damping into cavity-like, hybridized, marginal, and the
two exact zero modes along the meanfield direction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ParameterError
from .fluctuations import CovarianceMatrix, FluctuationMatrix, vacuum_covariance
from .meanfield import MeanfieldState, calibrate_pump, steady_state
from .params import SystemParams

__all__ = [
    "QuasiparticleMode",
    "ClassifyThresholds",
    "quasiparticle_modes",
    "classify",
    "track_modes",
    "qp_occupations",
    "lowest_excitation",
    "condensate_frame_matrix",
    "resonance_range",
    "power_in_range",
]


@dataclass
class QuasiparticleMode:
    """One eigenpair of M: complex frequency omega + i*gamma and vectors."""

    omega: float
    gamma: float
    right: np.ndarray  # unit Euclidean norm
    left: np.ndarray  # biorthonormal partner, (left, right) = 1
    kind: str = "unclassified"  # cavity_like | hybridized | marginal | zero_mode
    cavity_weight: float = 0.0
    band: int | None = None


@dataclass(frozen=True)
class ClassifyThresholds:
    """Decision constants for mode classification."""

    cavity_weight_min: float = 0.9
    cavity_gamma_window: float = 0.2  # |gamma + kappa| < window * kappa
    marginal_weight_max: float = 1e-6
    marginal_gamma_max: float = 1e-6  # |gamma| < this * kappa
    zero_tol: float = 1e-6  # |omega| + |gamma| below this counts as zero


def quasiparticle_modes(
    flm: FluctuationMatrix,
    state: MeanfieldState | None = None,
    dither: float = 1e-12,
) -> list[QuasiparticleMode]:
    """Full eigen-decomposition of M with biorthonormal left vectors.

    Right eigenvectors are normalized to unit Euclidean norm; left vectors
    come from the inverse of the right-eigenvector matrix so that
    (l_n, r_m) = delta_nm holds exactly up to inversion error.  A
    defective decomposition (ill-conditioned eigenbasis at an exact
    crossing) is retried once with an infinitesimal diagonal dither and a
    warning.  Modes are sorted by |omega|, positive omega first.
    """
    m = flm.m
    for attempt in range(2):
        evals, right = scipy.linalg.eig(m)
        cond = np.linalg.cond(right)
        if cond < 1e12:
            break
        if attempt == 0:
            warnings.warn(
                f"near-defective fluctuation matrix (cond {cond:.2e}); applying diagonal dither",
                stacklevel=2,
            )
            m = m + dither * np.eye(m.shape[0])
    norms = np.linalg.norm(right, axis=0)
    right = right / norms
    left = np.linalg.inv(right).conj().T  # columns biorthonormal to right columns

    modes = []
    for j in range(len(evals)):
        r = right[:, j]
        modes.append(
            QuasiparticleMode(
                omega=float(evals[j].real),
                gamma=float(evals[j].imag),
                right=r,
                left=left[:, j],
                cavity_weight=float(np.abs(r[0]) ** 2 + np.abs(r[1]) ** 2),
            )
        )
    modes.sort(key=lambda md: (abs(md.omega), -np.sign(md.omega)))
    if state is not None:
        modes = classify(modes, _delta_c_eff_of(flm, state), _kappa_of(flm, state), state=state)
    return modes


def _kappa_of(flm: FluctuationMatrix, state: MeanfieldState) -> float:
    # kappa is minus the imaginary part of the (da, da) entry of M
    return float(-flm.m[0, 0].imag)


def _delta_c_eff_of(flm: FluctuationMatrix, state: MeanfieldState) -> float:
    # the (da, da) entry is -delta_c_eff - i kappa
    return float(-flm.m[0, 0].real)


def classify(
    modes: list[QuasiparticleMode],
    delta_c_eff: float,
    kappa: float,
    thresholds: ClassifyThresholds = ClassifyThresholds(),
    state: MeanfieldState | None = None,
) -> list[QuasiparticleMode]:
    """Assign a kind to every mode.

    cavity_like: cavity weight above 0.9 and damping within 20% of kappa.
    marginal: vanishing cavity weight and |gamma| below 1e-6*kappa.
    zero_mode: |omega| + |gamma| below tolerance and, when the meanfield
    state is supplied, lying in its two-dimensional direction subspace.
    Everything else is hybridized.
    """
    th = thresholds
    z1 = z2 = None
    if state is not None:
        k = len(state.coeffs)
        dim = 2 + 2 * k
        z1 = np.zeros(dim, dtype=complex)
        z1[2 : 2 + k] = state.coeffs
        z2 = np.zeros(dim, dtype=complex)
        z2[2 + k :] = np.conj(state.coeffs)

    out = []
    for md in modes:
        size = abs(md.omega) + abs(md.gamma)
        kind = "hybridized"
        if z1 is not None:
            # the meanfield-direction channels are exactly decoupled; in a
            # rotated frame they sit away from zero, so identify them by
            # their subspace rather than their eigenvalue
            proj = abs(np.vdot(z1, md.right)) ** 2 + abs(np.vdot(z2, md.right)) ** 2
            if proj > 0.999:
                kind = "zero_mode"
        elif size < th.zero_tol * max(kappa, 1.0) * 1e-2 or size < th.zero_tol:
            kind = "zero_mode"
        if kind == "hybridized":
            if (
                md.cavity_weight > th.cavity_weight_min
                and abs(md.gamma + kappa) < th.cavity_gamma_window * kappa
            ):
                kind = "cavity_like"
            elif (
                md.cavity_weight < th.marginal_weight_max
                and abs(md.gamma) < th.marginal_gamma_max * kappa
            ):
                kind = "marginal"
        out.append(replace(md, kind=kind))
    return out


def track_modes(spectra: list[list[QuasiparticleMode]], overlap_min: float = 0.5):
    """Assign persistent band labels across an ordered grid of spectra.

    Greedy maximal-|overlap| matching of right eigenvectors between
    neighbouring grid points; a match with overlap below ``overlap_min``
    is recorded as a flagged crossing.  Returns (labelled spectra,
    flagged (grid index, band) pairs).
    """
    if not spectra:
        return [], []
    n = len(spectra[0])
    labelled = [[replace(md, band=j) for j, md in enumerate(spectra[0])]]
    flags = []
    prev = labelled[0]
    for gi, spec in enumerate(spectra[1:], start=1):
        if len(spec) != n:
            raise ParameterError(["all spectra must have the same mode count"])
        overlaps = np.abs(
            np.array([[np.vdot(a.right, b.right) for b in spec] for a in prev])
        )
        new = [None] * n
        used_rows, used_cols = set(), set()
        order = np.dstack(np.unravel_index(np.argsort(-overlaps, axis=None), overlaps.shape))[0]
        for row, col in order:
            if row in used_rows or col in used_cols:
                continue
            used_rows.add(row)
            used_cols.add(col)
            band = prev[row].band
            if overlaps[row, col] < overlap_min:
                flags.append((gi, band))
            new[col] = replace(spec[col], band=band)
        labelled.append([md for md in new])
        prev = labelled[-1]
    return labelled, flags


def _swap_indices(dim: int) -> np.ndarray:
    k = (dim - 2) // 2
    return np.concatenate(([1, 0], np.arange(2 + k, 2 + 2 * k), np.arange(2, 2 + k)))


def qp_occupations(
    c: CovarianceMatrix | np.ndarray,
    modes: list[QuasiparticleMode],
    state: MeanfieldState,
    clip: bool = True,
) -> np.ndarray:
    """Occupation <rho_n+ rho_n> of every mode from the covariance matrix.

    The mode operator is the left-eigenvector contraction of the
    fluctuation vector; its occupation is a quadratic form in C.  The
    same form evaluated on the vacuum covariance (the zero-point
    contribution of the non-normally-ordered C) is subtracted so a vacuum
    state reads exactly zero.
    """
    cm = c.c if isinstance(c, CovarianceMatrix) else c
    vac = vacuum_covariance(state).c
    perm = _swap_indices(cm.shape[0])
    vals = np.empty(len(modes))
    for j, md in enumerate(modes):
        l_swapped = md.left[perm]
        vals[j] = np.real(l_swapped @ (cm - vac) @ np.conj(md.left))
    if clip:
        bad = vals < -1e-8 * max(1.0, float(np.abs(vals).max()))
        if np.any(bad):
            warnings.warn(
                f"{int(bad.sum())} quasiparticle occupations below -1e-8; clipping",
                stacklevel=2,
            )
        vals = np.maximum(vals, 0.0)
    return vals


def lowest_excitation(modes: list[QuasiparticleMode], zero_tol: float = 1e-6) -> QuasiparticleMode:
    """The smallest positive-frequency non-zero mode."""
    cands = [md for md in modes if md.omega > zero_tol and md.kind != "zero_mode"]
    if not cands:
        raise ParameterError(["spectrum has no positive-frequency modes"])
    return min(cands, key=lambda md: md.omega)


def excitation_window(p: SystemParams, traj, n_samples: int = 65) -> dict:
    """Range swept by the lowest excitation frequency over one Bloch cycle.

    Samples the condensate-frame spectrum at the instantaneous meanfield
    along the trajectory; the sweep of the quasimomentum (and the
    accompanying lattice-depth modulation, overshoots included) turns the
    narrow excitation line into a broad band.  Frequencies are returned
    in Bloch-frequency units.
    """
    if p.omega_b <= 0:
        raise ParameterError(["excitation_window needs a finite Bloch frequency (force > 0)"])
    t_end = min(traj.span, p.bloch_period)
    ts = np.linspace(0.0, t_end, n_samples)
    w1 = np.empty(n_samples)
    for i, t in enumerate(ts):
        state = traj.state_at(t)
        modes = quasiparticle_modes(condensate_frame_matrix(p, state), state=state)
        w1[i] = lowest_excitation(modes).omega
    k = int(np.argmin(w1))
    state_min = traj.state_at(ts[k])
    return {
        "w1_min": float(w1.min() / p.omega_b),
        "w1_max": float(w1.max() / p.omega_b),
        "q_at_min": state_min.lab_quasimomentum(p.force),
    }


def resonance_range(
    p: SystemParams,
    betas,
    target_min_depth: float = 3.0,
    n_samples: int = 65,
) -> list[dict]:
    """Excitation-frequency envelope per collective coupling.

    For each coupling the pump is recalibrated to the target minimum
    depth, one Bloch cycle is integrated, and the instantaneous lowest
    excitation is tracked along it.  Bistable calibrations fall back to
    the lowest branch with a warning.
    """
    from .meanfield import evolve

    rows = []
    for beta in np.atleast_1d(betas):
        pb = p.with_updates(u0=float(beta) * p.kappa / p.n_atoms)
        cal = calibrate_pump(pb, target_min_depth)
        if cal.bistable:
            warnings.warn(
                f"bistable steady states at beta={beta}; using lowest branch", stacklevel=2
            )
        pb = pb.with_updates(eta=cal.eta)
        traj = evolve(pb, t_end=pb.bloch_period)
        window = excitation_window(pb, traj, n_samples=n_samples)
        rows.append({"beta": float(beta), "eta": cal.eta, **window})
    return rows


def condensate_frame_matrix(p: SystemParams, state: MeanfieldState) -> FluctuationMatrix:
    """Fluctuation generator in the frame co-rotating with the condensate.

    Gauging away the meanfield's phase rotation (rate mu = <phi|H|phi>)
    shifts the atomic diagonal blocks by -mu (+mu for the conjugates) and,
    at a steady state, freezes the couplings: the eigenvalues are then the
    physical Bohr frequencies of excitation out of the condensate.  The
    two meanfield-direction channels move from 0 to -/+ mu and stay
    exactly decoupled; they are identified by their subspace, not their
    eigenvalue.
    """
    from .fluctuations import build_fluctuation_matrix
    from .meanfield import bloch_hamiltonian

    flm = build_fluctuation_matrix(p, state)
    q_eff = state.q0 + p.force * state.t
    depth = p.u0 * float(abs(state.alpha) ** 2)
    h = bloch_hamiltonian(q_eff, depth, p.n_max)
    mu = float(np.real(np.vdot(state.coeffs, h @ state.coeffs)))
    k = len(state.coeffs)
    m = flm.m.copy()
    idx = np.arange(2, 2 + k)
    m[idx, idx] -= mu
    idx2 = np.arange(2 + k, 2 + 2 * k)
    m[idx2, idx2] += mu
    return FluctuationMatrix(m=m, t=flm.t)


def power_in_range(
    depth_spectrum: tuple[np.ndarray, np.ndarray],
    interval: tuple[float, float],
) -> float:
    """Fraction of Bloch-harmonic power falling inside a frequency window.

    ``depth_spectrum`` is (frequencies in Bloch units, magnitudes);
    harmonics are the bins sitting on positive integers.  Returns the
    power of harmonics inside [lo, hi] divided by the total harmonic
    power (zero-frequency excluded).
    """
    freqs, mags = depth_spectrum
    lo, hi = interval
    on_harmonic = (np.abs(freqs - np.round(freqs)) < 1e-6) & (np.round(freqs) >= 1)
    total = float(np.sum(mags[on_harmonic] ** 2))
    if total == 0.0:
        return 0.0
    inside = on_harmonic & (freqs >= lo) & (freqs <= hi)
    return float(np.sum(mags[inside] ** 2) / total)
