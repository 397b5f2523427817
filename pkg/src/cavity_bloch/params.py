"""Dimensionless system parameters and unit conversions.

All internal computation uses recoil units: lengths are measured in units
of the inverse lattice wavenumber, frequencies (and energies) in units of
the recoil frequency, time in inverse recoil frequencies.  SI quantities
appear only at the :func:`to_si` boundary.

The dimensionless force ``f`` relates to the Bloch frequency through
``omega_B = pi * f``, so the Bloch period is ``T_B = 2 / f``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import ParameterError

HBAR = 1.054_571_817e-34  # J s

#: Field names accepted in a flat key-value config, in canonical order.
PARAM_FIELDS = ("u0", "n_atoms", "eta", "delta_c", "kappa", "force", "q0", "n_max")

_DEFAULTS = {"q0": 0.0, "n_max": 16}


@dataclass(frozen=True)
class SystemParams:
    """Control parameters of the driven atom-cavity system (recoil units).

    Attributes:
        u0: Single-atom light shift (units of the recoil frequency).
        n_atoms: Meanfield atom number.
        eta: Cavity pump rate.
        delta_c: Pump-cavity detuning (typically negative).
        kappa: Cavity amplitude decay rate.
        force: Dimensionless force f; the Bloch frequency is pi*f.
        q0: Initial quasimomentum in the first Brillouin zone (-1, 1].
        n_max: Plane-wave cutoff; basis indices run -n_max..n_max.
    """

    u0: float
    n_atoms: float
    eta: float
    delta_c: float
    kappa: float
    force: float
    q0: float = 0.0
    n_max: int = 16

    def __post_init__(self):
        violations = _check(self.as_dict())
        if violations:
            raise ParameterError(violations)

    @property
    def beta(self) -> float:
        """Collective coupling N*U0/kappa."""
        return self.n_atoms * self.u0 / self.kappa

    @property
    def omega_b(self) -> float:
        """Bloch frequency pi*f (recoil units)."""
        return math.pi * self.force

    @property
    def bloch_period(self) -> float:
        """2*pi/omega_B = 2/f.  Infinite when force is zero."""
        return 2.0 / self.force if self.force > 0 else math.inf

    @property
    def n_modes(self) -> int:
        """Number of plane waves K = 2*n_max + 1."""
        return 2 * self.n_max + 1

    @property
    def fluctuation_dim(self) -> int:
        """Dimension 2 + 2K of the linearized-fluctuation system."""
        return 2 + 2 * self.n_modes

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def with_updates(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SiContext:
    """Physical scales needed to convert recoil units to SI."""

    recoil_frequency_hz: float  # omega_R / (2 pi)
    lattice_wavelength_m: float
    atom_mass_kg: float

    def __post_init__(self):
        bad = [
            f"{name} must be positive, got {getattr(self, name)}"
            for name in ("recoil_frequency_hz", "lattice_wavelength_m", "atom_mass_kg")
            if not (isinstance(getattr(self, name), (int, float)) and getattr(self, name) > 0)
        ]
        if bad:
            raise ParameterError(bad)


#: 87Rb in a 780 nm lattice, the reference experimental scale.
RB87_780NM = SiContext(
    recoil_frequency_hz=3.8e3,
    lattice_wavelength_m=780e-9,
    atom_mass_kg=1.443e-25,
)


def _check(raw: Mapping) -> list[str]:
    violations = []
    for name in PARAM_FIELDS:
        if name not in raw:
            violations.append(f"missing key '{name}'")
    for name, value in raw.items():
        if name not in PARAM_FIELDS:
            violations.append(f"unknown key '{name}'")
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            violations.append(f"{name} must be a number, got {value!r}")
        elif not math.isfinite(value):
            violations.append(f"{name} must be finite, got {value!r}")
    if violations:
        return violations  # cannot range-check incomplete/non-numeric input

    if raw["kappa"] <= 0:
        violations.append("kappa must be positive")
    if raw["n_atoms"] <= 0:
        violations.append("n_atoms must be positive")
    if raw["eta"] < 0:
        violations.append("eta must be non-negative")
    if raw["u0"] < 0:
        violations.append("u0 must be non-negative")
    if raw["force"] < 0:
        violations.append("force must be non-negative")
    if not (-1.0 < raw["q0"] <= 1.0):
        violations.append("q0 outside first Brillouin zone (-1, 1]")
    n_max = raw["n_max"]
    if int(n_max) != n_max or n_max < 4:
        violations.append("n_max must be an integer >= 4")
    if raw["u0"] > 0 and raw["kappa"] > 0:
        beta = raw["n_atoms"] * raw["u0"] / raw["kappa"]
        if not (math.isfinite(beta) and beta > 0):
            violations.append("derived beta = n_atoms*u0/kappa must be finite and positive")
    return violations


def validate(raw: Mapping) -> SystemParams:
    """Validate a flat key-value mapping and build :class:`SystemParams`.

    Every violated invariant is reported at once in the raised
    :class:`ParameterError`.  Optional keys (``q0``, ``n_max``) fall back
    to their defaults when absent.
    """
    merged = dict(_DEFAULTS)
    merged.update(raw)
    violations = _check(merged)
    if violations:
        raise ParameterError(violations)
    merged["n_max"] = int(merged["n_max"])
    return SystemParams(**merged)


def load_config(path) -> SystemParams:
    """Read system parameters from a flat JSON object file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ParameterError(["config must be a flat JSON object"])
    return validate(raw)


def scale_family(p: SystemParams, r: float) -> SystemParams:
    """Map parameters to the equivalent member of their scaling family.

    ``{u0, N, eta} -> {u0*r, N/r, eta/sqrt(r)}`` leaves the collective
    coupling beta and the intracavity lattice depth s(t) unchanged; the
    cavity amplitude rescales by 1/sqrt(r).
    """
    if not (isinstance(r, (int, float)) and math.isfinite(r) and r > 0):
        raise ParameterError([f"scale factor r must be positive and finite, got {r!r}"])
    return replace(
        p,
        u0=p.u0 * r,
        n_atoms=p.n_atoms / r,
        eta=p.eta / math.sqrt(r),
    )


def to_si(p: SystemParams, ctx: SiContext = RB87_780NM) -> dict:
    """Convert the observable scales of ``p`` to SI quantities.

    Returns a dict with the Bloch frequency in Hz (ordinary frequency),
    the external force in Newtons, and the cavity decay rate in Hz.
    """
    omega_r = 2.0 * math.pi * ctx.recoil_frequency_hz  # rad/s
    k_c = 2.0 * math.pi / ctx.lattice_wavelength_m
    return {
        "bloch_frequency_hz": math.pi * p.force * ctx.recoil_frequency_hz,
        "force_newtons": p.force * HBAR * k_c * omega_r,
        "kappa_hz": p.kappa * ctx.recoil_frequency_hz,
    }


def gravity_force(ctx: SiContext = RB87_780NM, g: float = 9.80665) -> float:
    """Dimensionless force f = M*g/(hbar*k_c*omega_R) for gravity along the axis."""
    omega_r = 2.0 * math.pi * ctx.recoil_frequency_hz
    k_c = 2.0 * math.pi / ctx.lattice_wavelength_m
    return ctx.atom_mass_kg * g / (HBAR * k_c * omega_r)
