"""Executable b^m-symplectic geometry.

Singular forms on coordinate charts, Laurent decomposition, desingularization,
moment maps, reduction in the normal-form model and abelian quasi-Hamiltonian
fusion, each with a verification routine.
"""
from .desing import DesingProfile, convergence_report, desingularize, fold_check
from .errors import BmError
from .expr import BmFunction, ChartModel, parse_expr, to_text
from .forms import SingularForm, VectorFieldExpr, ext_d, interior_product, nondegeneracy_check, wedge
from .laurent import decompose_2form, modular_weight
from .moduli import HolonomyChart, ab_form, b2_limit_check, singular_ab_form
from .moment import ActionSpec, check_bm_hamiltonian, compute_moment, cotangent_lift_moment, split_moment
from .quasi import QuasiSpace, exponentiate_space, fuse, quasi_reduce_abelian, varpi_form
from .reduction import build_cotangent_model, check_commutation, reduce_circle, reduce_model, reduce_torus_stage

__version__ = "0.1.0"

__all__ = [
    "ActionSpec", "BmError", "BmFunction", "ChartModel", "DesingProfile", "HolonomyChart", "QuasiSpace",
    "SingularForm", "VectorFieldExpr", "ab_form", "b2_limit_check", "build_cotangent_model",
    "check_bm_hamiltonian", "check_commutation", "compute_moment", "convergence_report",
    "cotangent_lift_moment", "decompose_2form", "desingularize", "exponentiate_space", "ext_d",
    "fold_check", "fuse", "interior_product", "modular_weight", "nondegeneracy_check", "parse_expr",
    "quasi_reduce_abelian", "reduce_circle", "reduce_model", "reduce_torus_stage", "singular_ab_form",
    "split_moment", "to_text", "varpi_form", "wedge",
]
