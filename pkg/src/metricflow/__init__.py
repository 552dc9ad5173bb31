"""Certified gradient flows of convex edge energies on finite weighted graphs."""

from .energies import (
    EnergyReport,
    Integrand,
    IntegrandError,
    SplitCertificate,
    coercivity_check,
    conjugate,
    energy,
    functional,
    parse_integrand,
    split_certificate,
    subdifferential_residual,
)
from .space import (
    Space,
    SpaceError,
    build_space,
    differential,
    divergence,
    load_space,
    lp_norm,
    pairing,
)

__version__ = "0.1.0"
