"""Discrete weak optimal transport: solvers, transforms, certificates.

Implements, at desk scale (finitely supported measures on R^d):

- classical Monge-Kantorovich LP with dual potentials and slackness checks;
- generic weak transport for costs C(x, rho) convex in the conditional law:
  primal Frank-Wolfe over the transport polytope, C-transforms, dual ascent,
  machine-checkable certificates, C-monotonicity probes;
- the lifted relaxation (column generation) for non-convex costs;
- barycentric costs: convex-order projection, convex Kantorovich-Rubinstein
  LPs, superhedging, map-regularity checks;
- entropic and convex-regularized OT (log-domain Sinkhorn, (h*)' densities);
- relaxed weak martingale transport, martingale Benamou-Brenier
  interpolation, and relaxed entropic martingale transport.
"""

from .classical import OTResult, kantorovich_rubinstein_check, ot_solve, wasserstein
from .convexkit import (Polytope, SampledFunction, biconjugate, conjugate,
                        inf_convolution, moreau_prox, subgradient_select,
                        support_function)
from .lp import LPSolution, lp_solve
from .measures import (ConditionalLaw, Coupling, DiscreteMeasure, LiftedAtom,
                       LiftedPlan, barycenter, glue_conditionals,
                       relative_entropy, restrict_normalize)
from .optim import (SolveReport, frank_wolfe, golden_section, newton_moment_match,
                    root_find_monotone, supergradient_ascent)
from .oracles import (WeakCostOracle, barycentric_oracle, entropy_oracle,
                      linear_oracle, min_oracle, sum_oracle)
from .thetas import ThetaOracle, scaled, theta_abs, theta_pplus, theta_sq, theta_support
from .weak import (Certificate, DualPair, c_monotonicity_probe, c_transform,
                   certify, continuity_probe, dual_ascent, dual_pair_from_g,
                   lifted_solve, primal_solve_convex, warm_dual_g)
from .barycentric import (BarycentricSolution, bt_dual_transform, bt_solve,
                          convex_order_margin, convex_order_projection,
                          gangbo_mccann_checks, kr_dual, strassen_lp,
                          superhedge_lp)
from .regularized import (RegularizedSolution, RegularizerOracle,
                          entropy_regularizer, eot_certify, h_regularized_solve,
                          quadratic_regularizer, sinkhorn, support_spread_check)
from .martingale import (EMTSolution, FiberCostOracle, RelaxedSolution,
                         chat_entropy, chat_zero, emt_sinkhorn,
                         gibbs_reconstruction_residual, mbb_dual_eval,
                         mbb_reg_solve, mcov, mean_constrained_c_transform,
                         relaxed_wmot_dual, relaxed_wmot_solve, remot_solve,
                         wmot_oracle)

__version__ = "0.1.0"
