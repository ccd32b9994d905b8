"""Cumulants of multivariate linear Hawkes processes.

Analytic integrated cumulants and cumulant densities from sums over
leaf-labeled rooted trees, exact cluster-process simulation with lineage,
and Monte Carlo estimators to check one against the other.
"""

__version__ = "0.1.0"

from .cumulants import (compile_tree_term, integrated_covariance, integrated_cumulant, integrated_third,
                        motif_series, tree_contributions)
from .density import (DensityContext, DensityValue, covariance_bin_average, covariance_density_grid,
                      cumulant_density, integrate_density, third_bin_average, third_density_grid)
from .errors import (BoundError, ConfigError, ConvergenceError, DegenerateError, ExplosionGuard, GridError,
                     HawkesError, LineageError, MalformedTreeError, SizeError, StabilityError, WindowError)
from .estimate import (BinnedCounts, BinnedEstimate, Estimate, bin_counts, covariance_density_estimate,
                       cumulants_from_moments, different_cluster_rate, empirical_integrated_cumulant,
                       joint_cumulant, moments_from_cumulants, same_cluster_coincidence, subset_moments,
                       window_diagnostic)
from .model import (BranchingSummary, ExponentialKernel, GridKernel, HawkesModel, RenewalDensity, ZeroKernel,
                    build_summary, default_grid, load_model, renewal_density, spectral_radius)
from .simulate import Event, EventStream, simulate_clusters, simulate_thinning
from .trees import LeafLabeledTree, canonical_form, count_trees, enumerate_trees
from .verify import VerificationReport, VerifyConfig, run_verify
