"""Verification lab for NTK-regime training of two-layer ReLU networks."""

from .data import DistributionSpec, make_linear, make_xor2, relabel_random
from .kernels import (GramMatrix, KernelSgdState, LinearKernel, MonteCarloKernel,
                      Ntk1Kernel, Ntk2Kernel, SumKernel, gram, k0, k1, k1_mc, k2,
                      k2_mc, kernel_sgd)
from .margin import (MarginResult, SimplexWeights, eigen_margin_lower_bound,
                     margin_objective, random_label_experiment, solve_margin,
                     witness_margins, witness_supnorm_check)
from .model import (Dataset, InitSnapshot, LabeledExample, NetworkParams,
                    empirical_risk, feature_map, forward, forward_all, init_network,
                    label_margins, linearized_risk, logistic_loss,
                    logistic_loss_slope, qhat, risk_gradient)
from .optimize import (DistanceInequalityMonitor, ScheduleConstants, TrainTrace,
                       distance_inequality_slacks, gd_train, schedule_constants,
                       sgd_train)
from .separators import (KernelWitnessSeparator, LinearSeparator, UBarMatrix,
                         Xor2Separator, build_u_bar, finite_margin,
                         init_output_check, near_activation_fraction,
                         ntk_lb_simulation, population_margin_mc, separator_value,
                         xor_region)
from .util import DivergenceError, OracleExhausted, ValidationError, substream

__version__ = "0.1.0"
