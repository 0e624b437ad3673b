"""Time-periodic carrying simplices of competitive Kolmogorov systems.

The pipeline: describe a system (:mod:`.model`), integrate it (:mod:`.flow`),
find the axis periodic orbits and normalize (:mod:`.poincare`), build the
carrying simplex and its time sections (:mod:`.simplex`), and check their
structural properties (:mod:`.verify`).
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (BlowUp, CarryingSimplexError, HypothesisFailure, InputError,
                     MeshFoldingError, NonConverged, NumericalError)
from .flow import (FlowResult, TorusPoint, extended_flow, flow, flow_many, flow_trajectory,
                   torus_distance)
from .model import (HypothesisReport, SystemSpec, check_H2, check_H3tilde, check_H4,
                    custom_piecewise, decoupled_logistic, eval_G, eval_g, from_callables,
                    lv_seasonal, lv_smooth, normalize, search_H3tilde, spec_from_dict,
                    spec_to_dict)
from .poincare import (AxisProfile, axis_fixed_point, axis_map, fitness, normalize_spec,
                       poincare_iter, poincare_map)
from .simplex import (DirectionGrid, RadialMesh, SectionFamily, construct_sigma,
                      direction_grid, gamma_membership, hausdorff, radial_distance, section,
                      section_family)
from .verify import (VerificationReport, check_asymptotic_phase, check_attraction,
                     check_conjugacy, check_lipschitz_projection, check_origin_repeller,
                     check_retrotone, check_unordered, project)

__all__ = [name for name in dir() if not name.startswith("_")]
