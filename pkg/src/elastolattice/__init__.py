"""Periodic spring-mass chain, its continuum limit, relative entropy and Young-measure diagnostics."""

__version__ = "0.1.0"

from .potential import (  # noqa: E402
    Custom, DomainError, PowerPlusQuadratic, Quadratic, relative_potential, verify_hypotheses,
)
from .lattice import IntegratorConfig, LatticeState, energy, run, step, strain  # noqa: E402
from .fields import Field, FieldPair, interpolate, lp_distance, lp_norm, sample  # noqa: E402
from .reference import FineLatticeOracle, FourierData, HorizonError, LinearExact, lipschitz_norm  # noqa: E402
from .entropy import EntropyReport, eta, eta_rel, gronwall_check, integrate_relative_entropy  # noqa: E402
from .youngmeasure import build_measure, concentration_measure, defect_measure, pair  # noqa: E402
