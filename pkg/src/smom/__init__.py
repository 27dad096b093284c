"""Stein's method of moments for unnormalized models."""
from .errors import *  # noqa: F401,F403
from .domains import Euclidean, SphereOrthant, Stiefel
from .models import (generalized_normal, generalized_gamma, multivariate_normal,
                     ppi_model, matrix_bingham, gn_reference_theta, gn_unit_variance_theta)
from .vector_fields import AnalyticField, MlpField, mlp_field, combine
from .stein import apply_stein, base_terms, manifold_divergence
from .samplers import sample
from .moments import estimate_moments, improved_fields, are_estimate
from .estimators import (score_matching, smom_expfam, improved_estimator, gn_mle, gn_sm,
                         gn_smom, newton_smom)
from .wasserstein import (wscore_normal, wscore_gn, wscore_gg, pde_residual, are_closed_form,
                          efficiency_span_test, mle_sm_gap)

__version__ = "0.1.0"
