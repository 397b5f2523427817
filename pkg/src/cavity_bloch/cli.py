"""Command-line front end.

Subcommands: steady-state, calibrate, run, spectrum, snr.  Every command
reads a flat JSON config of system parameters, writes CSV/JSON outputs
plus a manifest into its output directory, and is deterministic for a
fixed config and tool version.  Exit codes: 0 success, 2 config error,
3 numerical failure, 4 resource refusal.
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from . import snr as psnr
from .errors import CavityBlochError, ParameterError, ResourceError
from .fluctuations import evolve_linear_system
from .meanfield import (
    calibrate_pump,
    contrast,
    count_steady_states,
    depth_spectrum,
    evolve,
    steady_state,
)
from .coherent import evolve_rates
from .params import load_config
from .spectrum import qp_occupations, quasiparticle_modes, track_modes
from .fluctuations import build_fluctuation_matrix

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4


def _out_dir(args) -> Path:
    root = args.out or os.environ.get("CAVITY_BLOCH_OUT", "runs")
    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _error_json(out: Path, exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParameterError):
        payload["violations"] = exc.violations
    try:
        with open(out / "error.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    except OSError:
        pass
    print(json.dumps(payload), file=sys.stderr)


def cmd_steady_state(args) -> int:
    p = load_config(args.config)
    out = _out_dir(args)
    ss = steady_state(p, q=args.q)
    result = {
        "q": ss.q,
        "photon_number": ss.intensity,
        "depth": ss.depth,
        "cos2": ss.cos2,
        "delta_c_eff": ss.delta_c_eff,
        "re_alpha": ss.alpha_ss.real,
        "im_alpha": ss.alpha_ss.imag,
        "converged": ss.converged,
        "iterations": ss.iterations,
    }
    if p.force > 0 and p.eta > 0:
        # observable photon number: the mean over one Bloch oscillation
        traj = evolve(p, initial=ss.as_meanfield_state(), t_end=p.bloch_period)
        result["mean_photon_number"] = float(
            np.trapezoid(np.abs(traj.alpha) ** 2, traj.grid) / p.bloch_period
        )
        result["min_depth_bo"] = float(np.min(p.u0 * np.abs(traj.alpha) ** 2))
    with open(out / "steady_state.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    band_path = out / "band.csv"
    with open(band_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("band,energy," + ",".join(f"v_{n}" for n in range(-p.n_max, p.n_max + 1)) + "\n")
        for b, energy in enumerate(ss.band.energies):
            vec = ",".join(pio.fmt(v) for v in ss.band.vectors[:, b])
            fh.write(f"{b},{pio.fmt(energy)},{vec}\n")
    manifest = pio.RunManifest(
        params=pio.params_dict(p), command="steady-state", settings={"q": args.q}
    )
    manifest.add_output(out / "steady_state.json")
    manifest.add_output(band_path)
    manifest.write(out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    p = load_config(args.config)
    out = _out_dir(args)
    betas = _parse_grid(args.beta_grid) if args.beta_grid else [p.beta]
    rows = []
    for beta in betas:
        pb = p.with_updates(u0=beta * p.kappa / p.n_atoms) if args.beta_grid else p
        cal = calibrate_pump(pb, args.target_depth)
        pb = pb.with_updates(eta=cal.eta)
        n_roots = max(count_steady_states(pb, q) for q in np.linspace(-1, 1, 21))
        rows.append(
            {
                "beta": beta,
                "eta": cal.eta,
                "eta_over_kappa": cal.eta / p.kappa,
                "q_min": cal.q_min,
                "bistable": cal.bistable or n_roots > 1,
                "max_roots": n_roots,
            }
        )
    path = out / "calibration.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("beta,eta,eta_over_kappa,q_min,bistable,max_roots\n")
        for r in rows:
            fh.write(
                f"{pio.fmt(r['beta'])},{pio.fmt(r['eta'])},{pio.fmt(r['eta_over_kappa'])},"
                f"{pio.fmt(r['q_min'])},{pio.fmt(r['bistable'])},{r['max_roots']}\n"
            )
    manifest = pio.RunManifest(
        params=pio.params_dict(p),
        command="calibrate",
        settings={"target_depth": args.target_depth, "beta_grid": args.beta_grid},
    )
    manifest.add_output(path)
    manifest.write(out)
    return EXIT_OK


def cmd_run(args) -> int:
    p = load_config(args.config)
    out = _out_dir(args)
    t_end = args.t_end * (p.bloch_period if math.isfinite(p.bloch_period) else 8 * math.pi)
    if t_end == 0:
        # initial-state dump only
        from .meanfield import MeanfieldTrajectory, steady_state as _ss

        init = _ss(p, q=p.q0).as_meanfield_state()
        traj = MeanfieldTrajectory(
            params=p,
            grid=np.array([0.0]),
            alpha=np.array([init.alpha]),
            coeffs=init.coeffs[None, :],
        )
    else:
        traj = evolve(p, t_end=t_end, tol=args.tol)
    outputs = [pio.write_trajectory_csv(traj, out / "trajectory.csv")]
    settings = {"level": args.level, "t_end_periods": args.t_end, "tol": args.tol}
    if args.level == "fluctuations":
        run = evolve_linear_system(
            p,
            traj,
            snapshots_per_period=args.snapshots_per_period,
            step_bound=args.step_bound,
            check=not args.no_check,
            store_covariances=args.store_covariances,
            store_matrices=False,
        )
        outputs.append(pio.write_occupations_csv(run, out / "occupations.csv"))
        cov_path = pio.write_covariances_npz(run, out / "covariances.npz")
        if cov_path:
            outputs.append(cov_path)
        settings.update(
            {"snapshots_per_period": args.snapshots_per_period, "step_bound": args.step_bound}
        )
    elif args.level == "coherent_approx":
        rates = evolve_rates(p, traj)
        path = out / "rate_occupations.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("t," + ",".join(f"dN_{j}" for j in range(rates.n_modes)) + ",dN_total\n")
            for k, t in enumerate(rates.times):
                cols = ",".join(pio.fmt(v) for v in rates.per_mode[k])
                fh.write(f"{pio.fmt(t)},{cols},{pio.fmt(rates.total[k])}\n")
        outputs.append(path)
    manifest = pio.RunManifest(params=pio.params_dict(p), command="run", settings=settings)
    for path in outputs:
        manifest.add_output(path)
    manifest.write(out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    p = load_config(args.config)
    out = _out_dir(args)
    rows = []
    if args.over == "q":
        grid = _parse_grid(args.grid) if args.grid else list(np.linspace(-1, 1, 41))
        if len(grid) == 0:
            raise ParameterError(["empty q grid"])
        spectra = []
        for q in grid:
            ss = steady_state(p, q=q)
            flm = build_fluctuation_matrix(p, ss.as_meanfield_state())
            spectra.append(quasiparticle_modes(flm, state=ss.as_meanfield_state()))
        labelled, _ = track_modes(spectra)
        for q, spec in zip(grid, labelled):
            for md in spec:
                rows.append(_mode_row(q, md))
    else:
        t_end = args.t_end * p.bloch_period
        traj = evolve(p, t_end=t_end)
        run = evolve_linear_system(
            p, traj, snapshots_per_period=args.snapshots_per_period, check=False,
            store_covariances=True, store_matrices=True,
        )
        spectra = []
        for flm, cov in zip(run.matrices, run.covariances):
            state = traj.state_at(flm.t)
            spectra.append(quasiparticle_modes(flm, state=state))
        labelled, _ = track_modes(spectra)
        for k, spec in enumerate(labelled):
            state = traj.state_at(run.times[k])
            occ = qp_occupations(run.covariances[k], spec, state)
            for md, nj in zip(spec, occ):
                rows.append(_mode_row(run.times[k], md, occupation=nj))
    path = pio.write_spectrum_csv(rows, out / "spectrum.csv")
    manifest = pio.RunManifest(
        params=pio.params_dict(p),
        command="spectrum",
        settings={"over": args.over, "grid": args.grid, "t_end_periods": args.t_end},
    )
    manifest.add_output(path)
    manifest.write(out)
    return EXIT_OK


def _mode_row(x, md, occupation=0.0) -> dict:
    return {
        "x": x,
        "band": md.band if md.band is not None else -1,
        "omega": md.omega,
        "gamma": md.gamma,
        "kind": md.kind,
        "cavity_weight": md.cavity_weight,
        "occupation": occupation,
    }


def _snr_point_worker(task):
    """Module-level worker so scan points pickle across processes."""
    import json as _json

    p_dict, axis, value, t_end, omega, modes, target, cpp, checkpoint = task
    from .params import validate as _validate

    p = _validate(p_dict)
    try:
        row = psnr.scan_point(
            p, axis, value, t_end, omega=omega, modes=tuple(modes),
            target_min_depth=target, coarse_per_period=cpp,
        )
    except Exception as exc:  # noqa: BLE001
        row = {"axis": axis, "value": value, "failed": True, "error": str(exc)}
    if checkpoint:
        tmp = checkpoint + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            _json.dump(row, fh, sort_keys=True)
        os.replace(tmp, checkpoint)
    return row


def cmd_snr(args) -> int:
    p = load_config(args.config)
    out = _out_dir(args)
    values = _parse_grid(args.grid)
    if not values:
        raise ParameterError(["empty scan grid"])
    if args.axis not in ("beta", "depth", "n_atoms"):
        raise ParameterError([f"unknown axis '{args.axis}'"])
    t_end = args.T * p.bloch_period
    modes = ("detector_shot",) if args.no_backaction else ("detector_shot", "full_backaction")
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    tasks = []
    rows_done = {}
    for v in values:
        ckpt = ckpt_dir / f"point_{args.axis}_{v:.10g}.json"
        if args.resume and ckpt.exists():
            with open(ckpt, "r", encoding="utf-8") as fh:
                rows_done[v] = json.load(fh)
            continue
        tasks.append(
            (
                pio.params_dict(p),
                args.axis,
                v,
                t_end,
                None,
                modes,
                args.target_depth,
                args.coarse_per_period,
                str(ckpt),
            )
        )
    if tasks:
        workers = args.parallel or multiprocessing.cpu_count()
        if workers > 1 and len(tasks) > 1:
            with multiprocessing.get_context("spawn").Pool(workers) as pool:
                done = pool.map(_snr_point_worker, tasks)
        else:
            done = [_snr_point_worker(t) for t in tasks]
        for task, row in zip(tasks, done):
            rows_done[task[2]] = row
    rows = [rows_done[v] for v in values]
    path = pio.write_scan_csv(rows, out / "snr_scan.csv")
    manifest = pio.RunManifest(
        params=pio.params_dict(p),
        command="snr",
        settings={
            "axis": args.axis,
            "grid": args.grid,
            "T_periods": args.T,
            "target_depth": args.target_depth,
            "coarse_per_period": args.coarse_per_period,
        },
    )
    manifest.add_output(path)
    manifest.write(out)
    return EXIT_OK


def _parse_grid(spec: str | None) -> list[float]:
    """Comma list ('1,2,3') or range ('lo:hi:n') of grid values."""
    if not spec:
        return []
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
    return [float(x) for x in spec.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavity-bloch",
        description="Bloch oscillations of cavity-coupled cold atoms: meanfield, "
        "quantum fluctuations, and measurement signal-to-noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="flat JSON parameter file")
        sp.add_argument("--out", default=None, help="output directory (or $CAVITY_BLOCH_OUT)")
        sp.add_argument("--parallel", type=int, default=0, help="worker processes for scans")
        sp.add_argument("--resume", action="store_true", help="reuse existing checkpoints")

    sp = sub.add_parser("steady-state", help="self-consistent steady state at one q")
    common(sp)
    sp.add_argument("--q", type=float, default=0.0)
    sp.set_defaults(func=cmd_steady_state)

    sp = sub.add_parser("calibrate", help="pump rate for a target minimum lattice depth")
    common(sp)
    sp.add_argument("--target-depth", type=float, required=True)
    sp.add_argument("--beta-grid", default=None, help="optional beta grid 'lo:hi:n' or list")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="time evolution at a chosen fidelity level")
    common(sp)
    sp.add_argument("--t-end", type=float, required=True, help="duration in Bloch periods")
    sp.add_argument(
        "--level",
        choices=("meanfield", "fluctuations", "coherent_approx"),
        default="meanfield",
    )
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--snapshots-per-period", type=float, default=16)
    sp.add_argument("--step-bound", type=float, default=0.3)
    sp.add_argument("--no-check", action="store_true", help="skip the propagator cross-check")
    sp.add_argument("--store-covariances", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("spectrum", help="quasiparticle spectrum over q or time")
    common(sp)
    sp.add_argument("--over", choices=("q", "time"), default="q")
    sp.add_argument("--grid", default=None, help="q grid 'lo:hi:n' or comma list")
    sp.add_argument("--t-end", type=float, default=1.0, help="duration in Bloch periods")
    sp.add_argument("--snapshots-per-period", type=float, default=64)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("snr", help="signal-to-noise scan over beta, depth, or atom number")
    common(sp)
    sp.add_argument("--axis", required=True, choices=("beta", "depth", "n_atoms"))
    sp.add_argument("--grid", required=True, help="'lo:hi:n' or comma list")
    sp.add_argument("--T", type=float, default=2.0, help="integration window in Bloch periods")
    sp.add_argument("--target-depth", type=float, default=3.0)
    sp.add_argument("--coarse-per-period", type=float, default=32)
    sp.add_argument("--no-backaction", action="store_true")
    sp.set_defaults(func=cmd_snr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = None
    try:
        out = _out_dir(args)
        return args.func(args)
    except ParameterError as exc:
        if out:
            _error_json(out, exc)
        else:
            print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        if out:
            _error_json(out, exc)
        return EXIT_RESOURCE
    except (CavityBlochError, FloatingPointError, np.linalg.LinAlgError) as exc:
        if out:
            _error_json(out, exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
