"""Percolation laboratory: lattice models, couplings, observables and sharp-threshold diagnostics."""
from .fk import FKParams, FKWeightResult, fk_dual_params, fk_exact, fk_heatbath_step, fk_sample, fk_weight, self_dual_point
from .lattice import LatticeGraph, build_box, build_cycle, build_hex_domain, build_rectangle, dual_of
from .loops import LoopConfig, LoopParams, loop_exact, loop_sample, x_c
from .parafermion import contour_integral, count_saw, observable_field, parafermionic_F, sigma
from .percolation import (
    BondConfig,
    SiteConfig,
    clusters,
    crossing_prob,
    enumerate_expectation,
    one_arm_prob,
    sample_bernoulli,
)
from .potts import PottsConfig, PottsParams, beta_of_p, es_bond, es_color, p_of_beta
from .stats import Estimate

__version__ = "0.1.0"

__all__ = [
    "BondConfig",
    "Estimate",
    "FKParams",
    "FKWeightResult",
    "LatticeGraph",
    "LoopConfig",
    "LoopParams",
    "PottsConfig",
    "PottsParams",
    "SiteConfig",
    "beta_of_p",
    "build_box",
    "build_cycle",
    "build_hex_domain",
    "build_rectangle",
    "clusters",
    "contour_integral",
    "count_saw",
    "crossing_prob",
    "dual_of",
    "enumerate_expectation",
    "es_bond",
    "es_color",
    "fk_dual_params",
    "fk_exact",
    "fk_heatbath_step",
    "fk_sample",
    "fk_weight",
    "loop_exact",
    "loop_sample",
    "observable_field",
    "one_arm_prob",
    "p_of_beta",
    "parafermionic_F",
    "sample_bernoulli",
    "self_dual_point",
    "sigma",
    "x_c",
]
