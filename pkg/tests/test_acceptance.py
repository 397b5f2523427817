"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The expensive shared runs (long noise evolutions, the coupling-strength
scan) are built once per session and cached on disk under tests/_cache so
a re-run of the suite does not recompute hours of dynamics.  Delete the
cache directory (or set CAVITY_BLOCH_TEST_CACHE=0) for a cold run.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
report lines as they complete.
"""

import math
import os
import pickle
from pathlib import Path

import numpy as np
import pytest

from cavity_bloch import scale_family
from cavity_bloch.coherent import evolve_rates
from cavity_bloch.fluctuations import (
    evolve_linear_system,
    heating_onset,
    pairing_residual,
    swap_residual,
    zero_mode_residual,
)
from cavity_bloch.meanfield import (
    MeanfieldState,
    calibrate_pump,
    count_steady_states,
    depth_spectrum,
    evolve,
    steady_state,
)
from cavity_bloch.snr import snr_detector_shot, snr_full, two_time_grid
from cavity_bloch.spectrum import power_in_range, resonance_range
from conftest import reference_params

pytestmark = pytest.mark.acceptance

CACHE_DIR = Path(__file__).parent / "_cache"
KAPPA = 345.0
PAPER_ETAS = {1: 30.7, 3: 24.2, 5: 24.3}
PAPER_PHOTONS = {1: 458.0, 3: 172.0, 5: 117.0}

# scan settings for the coupling-strength grid (reduced desk scale)
SCAN_T_PERIODS = 2.0
SCAN_NMAX = 12
SCAN_STEP_BOUND = 0.6
SCAN_BETAS = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] + [6.5 + 0.5 * k for k in range(14)]  # .. 13.0


def _cached(key, builder):
    if os.environ.get("CAVITY_BLOCH_TEST_CACHE", "1") != "1":
        return builder()
    path = CACHE_DIR / f"{key}.pkl"
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    value = builder()
    CACHE_DIR.mkdir(exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(value, fh)
    os.replace(tmp, path)
    return value


def _report(num, ok, detail):
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    assert ok, f"criterion {num}: {detail}"


def _beta_params(beta, n_max=SCAN_NMAX, target_depth=3.0):
    p = reference_params(1, 30.7, n_max=n_max).with_updates(u0=beta * KAPPA / 5e4)
    cal = calibrate_pump(p, target_depth)
    return p.with_updates(eta=cal.eta), cal


# ---------------------------------------------------------------------------
# shared expensive runs


@pytest.fixture(scope="session")
def beta1_noise_run_5tb():
    """5 Bloch periods at the reference coupling, full diagnostics on."""

    def build():
        p = reference_params(1, 30.7, n_max=16)
        traj = evolve(p, t_end=5 * p.bloch_period, tol=1e-10)
        run = evolve_linear_system(
            p,
            traj,
            snapshots_per_period=16,
            step_bound=0.2,
            check=True,
            store_covariances=False,
            store_matrices=True,
        )
        meanfields = [
            (complex(traj.dense(t)[0]), np.asarray(traj.dense(t)[1:], dtype=complex))
            for t in run.times
        ]
        return p, run, meanfields

    return _cached("beta1_5tb_check", build)


@pytest.fixture(scope="session")
def long_runs_40tb():
    """40 Bloch periods at couplings 1 and 5, plus the force-free control.

    Only small derived series are kept (and cached): occupation curves,
    diagnostics, and the rate-model totals needed by criterion 7.
    """

    def build():
        out = {}
        for beta in (1.0, 5.0):
            p, _ = _beta_params(beta)
            traj = evolve(p, t_end=40 * p.bloch_period, tol=1e-10)
            run = evolve_linear_system(
                p,
                traj,
                snapshots_per_period=16,
                step_bound=SCAN_STEP_BOUND,
                check=False,
                store_covariances=False,
                store_matrices=False,
            )
            entry = {
                "params": p,
                "times": run.times,
                "dN": run.atom_occupation,
                "dn": run.photon_occupation,
                "max_comm": float(run.commutator_residuals.max()),
            }
            if beta == 1.0:
                rates = evolve_rates(
                    p, traj, n_modes=8, samples_per_period=64, t_end=5 * p.bloch_period
                )
                entry["rates_5tb"] = (rates.times, rates.total)
            out[beta] = entry
        p1 = out[1.0]["params"].with_updates(force=0.0)
        t_ref = 8 * math.pi
        traj0 = evolve(p1, t_end=25 * t_ref, tol=1e-10)
        run0 = evolve_linear_system(
            p1,
            traj0,
            snapshots_per_period=16,
            step_bound=SCAN_STEP_BOUND,
            check=False,
            store_covariances=False,
            store_matrices=False,
        )
        out["f0"] = {"params": p1, "times": run0.times, "dN": run0.atom_occupation}
        return out

    return _cached("long_runs_40tb", build)


@pytest.fixture(scope="session")
def weak_coupling_run():
    """Coupling 0.1: the regime where the rate model is near exact."""

    def build():
        p, _ = _beta_params(0.1)
        traj = evolve(p, t_end=5 * p.bloch_period, tol=1e-10)
        run = evolve_linear_system(
            p,
            traj,
            snapshots_per_period=32,
            step_bound=0.3,
            check=True,
            store_covariances=False,
            store_matrices=False,
        )
        rates = evolve_rates(p, traj, n_modes=8, samples_per_period=64)
        return {
            "params": p,
            "times": run.times,
            "dN": run.atom_occupation,
            "max_dual": run.max_dual_residual,
            "max_comm": float(run.commutator_residuals.max()),
            "rates": (rates.times, rates.total),
        }

    return _cached("weak_coupling_run", build)


def _scan_point(beta):
    from cavity_bloch.snr import scan_point

    p = reference_params(1, 30.7, n_max=SCAN_NMAX)
    row = scan_point(
        p,
        "beta",
        beta,
        SCAN_T_PERIODS * p.bloch_period,
        target_min_depth=3.0,
        coarse_per_period=32,
        step_bound=SCAN_STEP_BOUND,
    )
    shot = row["results"]["detector_shot"]
    full = row["results"]["full_backaction"]
    return {
        "beta": beta,
        "eta": row["eta"],
        "bistable": row["bistable_calibration"],
        "contrast": row["contrast"],
        "shot": shot["snr"],
        "full": full["snr"],
        "converged": full["converged"],
        "convergence_delta": full["convergence_delta"],
    }


@pytest.fixture(scope="session")
def snr_beta_scan():
    def build():
        return [_scan_point(b) for b in SCAN_BETAS]

    return _cached("snr_beta_scan", build)


@pytest.fixture(scope="session")
def resonance_diagnostic():
    """Harmonic power inside the lowest-excitation window per coupling."""

    def build():
        from cavity_bloch.spectrum import excitation_window

        betas = np.arange(5.0, 13.01, 0.25)
        p = reference_params(1, 30.7, n_max=SCAN_NMAX)
        rows = []
        for beta in betas:
            pb, cal = _beta_params(float(beta))
            traj = evolve(pb, t_end=pb.bloch_period, tol=1e-10, samples_per_period=2048)
            window = excitation_window(pb, traj, n_samples=65)
            spec = depth_spectrum(traj)
            rows.append(
                {
                    "beta": float(beta),
                    "w1_min": window["w1_min"],
                    "w1_max": window["w1_max"],
                    "power": power_in_range(spec, (window["w1_min"], window["w1_max"])),
                }
            )
        return rows

    return _cached("resonance_diagnostic", build)


def _prominent_extrema(xs, ys, kind, n_keep=2):
    """Locations of the n most prominent interior local minima/maxima."""
    xs = np.asarray(xs)
    ys = np.asarray(ys) if kind == "max" else -np.asarray(ys)
    cands = []
    for i in range(1, len(ys) - 1):
        if ys[i] >= ys[i - 1] and ys[i] >= ys[i + 1]:
            left = ys[i] - ys[: i + 1].min()
            right = ys[i] - ys[i:].min()
            cands.append((min(left, right), xs[i]))
    cands.sort(reverse=True)
    return sorted(x for _, x in cands[:n_keep])


# ---------------------------------------------------------------------------
# criteria


def test_c01_steady_state_photon_numbers():
    details = []
    ok = True
    for mult, eta_k in PAPER_ETAS.items():
        p = reference_params(mult, eta_k, n_max=16)
        traj = evolve(p, t_end=p.bloch_period, tol=1e-10)
        mean_photons = float(np.trapezoid(np.abs(traj.alpha) ** 2, traj.grid) / p.bloch_period)
        qs = np.linspace(-1.0, 1.0, 41)
        min_depth = min(steady_state(p, q=q).depth for q in qs)
        target = PAPER_PHOTONS[mult]
        ok_here = abs(mean_photons - target) <= 0.05 * target and abs(min_depth - 3.0) <= 0.15
        ok = ok and ok_here
        details.append(
            f"beta~{mult}: <n>={mean_photons:.1f} (ref {target:.0f}), min s={min_depth:.3f}"
        )
    _report(1, ok, "; ".join(details))


def test_c02_pump_calibration_inversion():
    details = []
    ok = True
    for mult, eta_k in PAPER_ETAS.items():
        p = reference_params(mult, eta_k, n_max=16)
        cal = calibrate_pump(p, 3.0)
        ratio = cal.eta / KAPPA
        ok = ok and abs(ratio - eta_k) <= 0.05 * eta_k
        details.append(f"beta~{mult}: eta/kappa={ratio:.2f} (ref {eta_k})")
    _report(2, ok, "; ".join(details))


def test_c03_structural_invariants(beta1_noise_run_5tb):
    p, run, meanfields = beta1_noise_run_5tb
    worst_swap = worst_pair = worst_zero = 0.0
    for flm, (alpha, coeffs) in zip(run.matrices, meanfields):
        state = MeanfieldState(alpha, coeffs / np.linalg.norm(coeffs), q0=p.q0, t=flm.t)
        worst_swap = max(worst_swap, swap_residual(flm.m))
        worst_pair = max(worst_pair, pairing_residual(flm.m))
        worst_zero = max(worst_zero, zero_mode_residual(flm.m, state))
    ok = worst_swap < 1e-10 and worst_pair < 1e-8 and worst_zero < 1e-10
    _report(
        3,
        ok,
        f"{len(run.matrices)} snapshots: swap {worst_swap:.2e} (<1e-10), "
        f"pairing {worst_pair:.2e} (<1e-8), zero-mode {worst_zero:.2e} (<1e-10)",
    )


def test_c04_marginal_modes():
    from cavity_bloch.fluctuations import build_fluctuation_matrix
    from cavity_bloch.spectrum import quasiparticle_modes

    p = reference_params(1, 30.7, n_max=16).with_updates(u0=0.01)
    cal = calibrate_pump(p, 3.0)
    p = p.with_updates(eta=cal.eta)

    def low_branches(q):
        ss = steady_state(p, q=q)
        state = ss.as_meanfield_state()
        modes = quasiparticle_modes(build_fluctuation_matrix(p, state), state=state)
        cands = [
            md
            for md in modes
            if md.omega > 1e-6 and md.kind not in ("cavity_like", "zero_mode")
        ]
        return sorted(cands, key=lambda md: md.omega)[:2], ss

    edge, _ = low_branches(1.0)
    center, _ = low_branches(0.0)
    mid, ss_mid = low_branches(0.5)
    edge_marg = [abs(md.gamma) < 1e-6 * KAPPA for md in edge]
    center_marg = [abs(md.gamma) < 1e-6 * KAPPA for md in center]
    ok = (
        edge_marg.count(True) == 1
        and center_marg.count(True) == 1
        and edge_marg.index(True) != center_marg.index(True)
        and all(md.gamma < 0 and abs(md.gamma) > 1e-6 * KAPPA for md in mid)
        and ss_mid.delta_c_eff < 0
    )
    _report(
        4,
        ok,
        f"edge gammas {[f'{md.gamma:.2e}' for md in edge]}, "
        f"center gammas {[f'{md.gamma:.2e}' for md in center]}, "
        f"mid gammas {[f'{md.gamma:.2e}' for md in mid]}",
    )


def test_c05_covariance_correctness(beta1_noise_run_5tb):
    p, run, _ = beta1_noise_run_5tb
    dual = run.max_dual_residual
    comm = float(run.commutator_residuals.max())
    ok = dual < 1e-6 and comm < 1e-4
    _report(5, ok, f"dual-method {dual:.2e} (<1e-6), commutator {comm:.2e} (<1e-4), 5 T_B")


def test_c06_cooling_vs_bloch_heating(long_runs_40tb):
    runs = long_runs_40tb
    t_ref = 8 * math.pi
    ctrl = runs["f0"]
    slopes = np.gradient(ctrl["dN"], ctrl["times"])
    early_peak = float(np.max(slopes[ctrl["times"] <= 5 * t_ref]))
    late = float(np.mean(slopes[ctrl["times"] >= ctrl["times"][-1] - 5 * t_ref]))
    saturated = late < 0.01 * early_peak

    details = [f"f=0: late/early slope {late / early_peak:.2e} (<0.01)"]
    ok = saturated
    for beta in (1.0, 5.0):
        entry = runs[beta]
        p = entry["params"]
        frac = entry["dN"] / p.n_atoms
        onset = heating_onset(entry["times"], entry["dN"], p.bloch_period, rel_tol=5e-2)
        ok_here = frac.max() < 1e-2 and onset is not None
        ok = ok and ok_here
        details.append(
            f"beta={beta:g}: max dN/N {frac.max():.2e} (<1e-2), "
            f"t_l {'%.1f T_B' % (onset / p.bloch_period) if onset else 'none'}"
        )
    _report(6, ok, "; ".join(details))


def test_c07_coherent_state_approximation(weak_coupling_run, long_runs_40tb):
    entry = weak_coupling_run
    p = entry["params"]
    rate_times, rate_total = entry["rates"]
    rate_on_run = np.interp(entry["times"], rate_times, rate_total)
    mask = entry["times"] >= 0.5 * p.bloch_period
    rel = np.abs(rate_on_run[mask] - entry["dN"][mask]) / entry["dN"][mask]
    weak_ok = float(rel.max()) < 0.10

    b1 = long_runs_40tb[1.0]
    p1 = b1["params"]
    horizon = 5 * p1.bloch_period
    r_times, r_total = b1["rates_5tb"]
    full_end = float(np.interp(horizon, b1["times"], b1["dN"]))
    rate_end = float(r_total[-1])
    under_ok = rate_end < full_end
    _report(
        7,
        weak_ok and under_ok,
        f"beta=0.1 max pointwise dev {rel.max():.1%} (<10%); "
        f"beta=1 at 5 T_B: rate {rate_end:.2f} < full {full_end:.2f}: {under_ok}",
    )


def test_c08_snr_structure(snr_beta_scan, resonance_diagnostic):
    rows = snr_beta_scan
    betas = np.array([r["beta"] for r in rows])
    shot = np.array([r["shot"] for r in rows])
    full = np.array([r["full"] for r in rows])

    # (a) backaction can only lower the ratio
    below = bool(np.all(full <= shot * (1 + 1e-9)))

    # (b) the detector-shot estimate rises with coupling up to the scan limit
    upto12 = betas <= 12.0 + 1e-9
    shot_monotone = bool(np.all(np.diff(shot[upto12]) > 0))

    # (c) dip locations match the resonance diagnostic maxima within 0.5
    ratio = full / shot
    window = betas >= 5.0
    dips = _prominent_extrema(betas[window], ratio[window], "min", n_keep=2)
    diag_b = [r["beta"] for r in resonance_diagnostic]
    diag_p = [r["power"] for r in resonance_diagnostic]
    peaks = _prominent_extrema(diag_b, diag_p, "max", n_keep=2)
    match = (
        len(dips) == 2
        and len(peaks) == 2
        and all(min(abs(d - pk) for pk in peaks) <= 0.5 for d in dips)
    )

    # (d) stride-halving convergence of every scan point
    converged = bool(all(r["converged"] for r in rows))

    ok = below and shot_monotone and match and converged
    _report(
        8,
        ok,
        f"full<=shot {below}; shot monotone to 12 {shot_monotone}; "
        f"dips {dips} vs diagnostic peaks {peaks}; all points converged {converged} "
        f"(T = {SCAN_T_PERIODS:g} T_B)",
    )


def test_c09_scaling_symmetry():
    p = reference_params(1, 30.7, n_max=SCAN_NMAX)
    cal = calibrate_pump(p, 3.0)
    p = p.with_updates(eta=cal.eta)
    t_end = p.bloch_period
    base = evolve(p, t_end=t_end, tol=1e-11)
    depth_ok = True
    for r in (0.5, 2.0):
        scaled = evolve(scale_family(p, r), t_end=t_end, tol=1e-11)
        depth_ok = depth_ok and float(np.abs(scaled.depth - base.depth).max()) < 1e-6 * float(
            base.depth.max()
        )

    def point(n_atoms):
        def build():
            pr = scale_family(p, p.n_atoms / n_atoms)
            t2 = SCAN_T_PERIODS * pr.bloch_period
            traj = evolve(pr, t_end=t2, tol=1e-10)
            shot = snr_detector_shot(traj, pr.omega_b, t2)
            grid, _ = two_time_grid(
                pr, traj, t_end=t2, coarse_per_period=32, step_bound=SCAN_STEP_BOUND
            )
            return {
                "shot": shot.snr,
                "full": snr_full(grid, traj, pr.omega_b, t2).snr,
            }

        return _cached(f"snr_natoms_{n_atoms:.0f}", build)

    ns = np.array([2.5e4, 5e4, 1e5])
    res = [point(n) for n in ns]
    shot_vals = np.array([r["shot"] for r in res])
    full_vals = np.array([r["full"] for r in res])
    slopes_shot = shot_vals / ns
    slopes_full = full_vals / ns
    linear_ok = (
        float(np.abs(slopes_shot / slopes_shot.mean() - 1).max()) < 0.05
        and float(np.abs(slopes_full / slopes_full.mean() - 1).max()) < 0.05
    )
    distinct_ok = bool(np.all(full_vals < shot_vals)) and (
        (slopes_shot.mean() - slopes_full.mean()) / slopes_shot.mean() > 0.005
    )
    ok = depth_ok and linear_ok and distinct_ok
    _report(
        9,
        ok,
        f"s(t) invariant {depth_ok}; linear in N {linear_ok} "
        f"(shot slope {slopes_shot.mean():.3e}, full slope {slopes_full.mean():.3e}); "
        f"distinct {distinct_ok}",
    )


def test_c10_bistability_onset():
    def build():
        onset = None
        rows = []
        for beta in np.arange(18.0, 32.1, 2.0):
            p, cal = _beta_params(float(beta), n_max=SCAN_NMAX)
            multi = cal.bistable
            if not multi:
                for q in np.linspace(-1.0, 1.0, 21):
                    if count_steady_states(p, float(q)) > 1:
                        multi = True
                        break
            rows.append((float(beta), multi))
            if multi and onset is None:
                onset = float(beta)
        return onset, rows

    onset, rows = _cached("bistability_onset", build)
    ok = onset is not None and 20.0 <= onset <= 30.0
    _report(10, ok, f"first multi-valued steady state at beta={onset} (detail {rows})")
