"""Bloch oscillations of cold atoms in a driven optical cavity.

Meanfield dynamics, linearized quantum fluctuations under cavity Langevin
noise, quasiparticle spectra, heating, and the signal-to-noise ratio of a
continuous Bloch-frequency measurement, all in recoil units.
"""

from .errors import (
    CavityBlochError,
    ConvergenceError,
    IntegrationError,
    ParameterError,
    ResourceError,
)
from .params import RB87_780NM, SiContext, SystemParams, load_config, scale_family, to_si, validate

__version__ = "0.1.0"

__all__ = [
    "CavityBlochError",
    "ConvergenceError",
    "IntegrationError",
    "ParameterError",
    "ResourceError",
    "RB87_780NM",
    "SiContext",
    "SystemParams",
    "load_config",
    "scale_family",
    "to_si",
    "validate",
    "__version__",
]
