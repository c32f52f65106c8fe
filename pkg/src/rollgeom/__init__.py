"""Rolling of Riemannian manifolds: simulation and controllability diagnostics."""
from ._accel import backend
from .controllability import (HolonomyAlgebra, LieSpanReport, codim_report, holonomy_algebra,
                              involutivity_check, larc, ns_controllable, ns_fiber_tangent_dim,
                              rol_scan, totally_geodesic_obstruction)
from .dimgap import (GapConfig, lift_source, lift_target, project_source, project_target)
from .domain import Domain, DomainError
from .manifolds import (Isometry, ManifoldSpec, PathSpec, curvature, custom_metric, euclidean,
                        geodesic_flow, hyperbolic, orthonormal_frame, perturbed, product,
                        sectional, sphere, warped)
from .rol import (flow_bracket_oracle, lr_bracket, lr_nu_bracket, nu_nu_bracket, rol, rol_cov,
                  rol_norm)
from .rolling import (ControlSignal, GeodesicControl, RollingTrajectory, act_isometry,
                      antidevelop, develop, roll, roll_geodesic, roll_ns)
from .state import (RollingState, TangentTriple, dim_Q, make_state, random_state,
                    transpose_dual, vertical_basis, vertical_dim)

__version__ = "0.1.0"

__all__ = [
    "backend", "HolonomyAlgebra", "LieSpanReport", "codim_report", "holonomy_algebra",
    "involutivity_check", "larc", "ns_controllable", "ns_fiber_tangent_dim", "rol_scan",
    "totally_geodesic_obstruction", "GapConfig", "lift_source", "lift_target",
    "project_source", "project_target", "Domain", "DomainError", "Isometry", "ManifoldSpec",
    "PathSpec", "curvature", "custom_metric", "euclidean", "geodesic_flow", "hyperbolic",
    "orthonormal_frame", "perturbed", "product", "sectional", "sphere", "warped",
    "flow_bracket_oracle", "lr_bracket", "lr_nu_bracket", "nu_nu_bracket", "rol", "rol_cov",
    "rol_norm", "ControlSignal", "GeodesicControl", "RollingTrajectory", "act_isometry",
    "antidevelop", "develop", "roll", "roll_geodesic", "roll_ns", "RollingState",
    "TangentTriple", "dim_Q", "make_state", "random_state", "transpose_dual",
    "vertical_basis", "vertical_dim", "__version__",
]
