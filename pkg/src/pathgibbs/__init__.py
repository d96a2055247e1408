"""Gibbs point processes of Langevin paths: simulation, cluster expansion and Kirkwood-Salsburg tools."""

__version__ = "0.1.0"

from .langevin import LangevinSpec, PathMark, simulate_mark, simulate_marks, exp_moment_estimate  # noqa: E402
from .potentials import (ScalarPotential, PathPairPotential, SelfPotential, phi_eval, pair_energy,  # noqa: E402
                         truncated_pair, phi_tail_norm, stability_constant_bound)
from .configurations import (MarkedPoint, Configuration, pair_interaction_energy, conditional_energy,  # noqa: E402
                             total_energy, interaction_range, temperedness_index, select_anchor, is_admissible)
from .reference import ReferenceMeasure  # noqa: E402
from .cluster import (enumerate_trees, enumerate_connected_graphs, k_eta, ursell_function,  # noqa: E402
                      ursell_kernel, q_single, q_full)
from .constants import (z_ruelle, c_z, ks_norm_bound, z_crit, uniform_rb_threshold,  # noqa: E402
                        regularity_constant, weighted_constants)
from .ks import KSModel, CorrelationSequence, WeightFunction, ks_apply, ks_residual, neumann_eval  # noqa: E402
from .sampler import SamplerConfig, mcmc_run, estimate_intensity, gnz_residual, partition_oracle  # noqa: E402
