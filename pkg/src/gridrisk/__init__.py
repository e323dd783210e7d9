"""Conservative line-failure bounds and safe capacity regions for DC grids with Gaussian injections."""

from .case_io import CapacityRule, CaseData, Scenario, load_case_json, load_scenario, parse_matpower
from .flow_factors import FlowFactorization, InjectionModel, factorize, pseudo_inverse, psd_sqrt, slack_embedding
from .grid_model import Bus, Line, Network, build_incidence, build_laplacian, validate
from .mc_oracle import (
    MonteCarloRiskEstimator,
    McEstimate,
    concentration_check,
    estimate_failure_prob,
    estimate_risk,
    sample_flows,
)
from .regions import HalfSpaceSystem, RegionSlice, membership, rup_halfspaces, sweep_slice
from .risk_bounds import RiskAssessment, assess, failure_bound, r_star, r_up, risk_threshold

__version__ = "0.1.0"
