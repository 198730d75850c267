"""Delayed linear dividend strategies for a Brownian surplus.

Closed-form value functions, the optimal barrier, HJB verification and a
Monte Carlo oracle for the refracted diffusion.
"""

from .errors import (AccuracyError, AccuracyWarning, BracketError, ConfigError,
                     DegenerateError, DomainError)
from .optimizer import (KSize, OrderingReport, Regime, RegimeDecision, classical_barrier,
                        delta_threshold, ordering_report, solve_b_star)
from .params import ControlParams, ModelParams
from .simulator import (Kind, McEstimate, PathFunctionalSpec, Scheme, SimConfig, closed_form,
                        estimate, simulate_path, strong_convergence_check)
from .specfun import ScaleEval, gamma, h_func, pcf, w_scale
from .valuation import (HjbReport, ValueFunctionRep, coefficients, hjb_check, pasting, value,
                        value_d1, value_d2, value_rep)

__version__ = "0.1.0"
