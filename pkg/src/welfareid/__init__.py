"""Welfare analysis of discrete choice from choice probabilities.

Identified welfare distributions, subsidy welfare effects, partial
identification bounds, shape-constrained demand estimation and optimal
income-targeted subsidies.
"""
from ._accel import backend
from .binary_welfare import (SubsidyScenario, acv, ate, delta_asw, dwl, mvpf,
                             mvpf_linear_net_benefit)
from .bounds import ObservedDemandSet, multinomial_cdf_bounds, ordered_cdf_bounds
from .choice_model import (BudgetPoint, ChoiceModel, HeterogeneitySpec, ModelError, Offset,
                           QuasilinearModel, QuasilinearSpec, UtilitySpec, eval_choice_prob,
                           logit_model, make_quasilinear, make_synthetic, model_from_json,
                           probit_model)
from .estimation import (DemandFit, EstimationDataset, bootstrap_fit, first_stage,
                         fit_constrained_probit, fit_to_model, impute_prices)
from .oracle import agent_cv, simulate_welfare
from .splines import SplineBasis, build_spline_basis
from .targeting import (IncomeDistribution, SubsidySchedule, bayes_optimal_schedule,
                        optimal_schedule, program_cost, soc_check)
from .welfare_distribution import (InequalityAversion, WelfareCdf, asw, welfare_cdf,
                                   welfare_inequality_index)

__version__ = "0.1.0"
