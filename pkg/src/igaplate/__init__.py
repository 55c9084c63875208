"""NURBS-based mixed Reissner-Mindlin plate solver with dual-basis lumped condensation."""

from .splines import (
    BasisEval,
    ControlNet,
    KnotVector,
    SurfacePatch,
    continuity_profile,
    elevate_degree,
    eval_basis_1d,
    eval_surface,
    insert_knots,
    validate_knot_vector,
)
from .duals import (
    DualTransform1D,
    DualTransform2D,
    dual_transform_1d,
    dual_transform_2d,
    extract_element_transform,
    gram_matrix,
    reduce_continuity,
)
from .plate import (
    FieldSpaces,
    MixedSystem,
    PlateMaterial,
    apply_clamped_bc,
    assemble,
    build_field_spaces,
    element_matrices,
    material,
)
from .condense import (
    CondensedSystem,
    SolveConfig,
    VariantSolution,
    condense,
    pg_transform,
    recover_shear,
    row_sum_lump,
    solve_variant,
)
from .multipatch import PatchAssembly, build_dof_map
from .sparse import nnz_and_bandwidth, solve_direct
from .bench import (
    BenchmarkProblem,
    StudyConfig,
    exact_displacement,
    geometry_catalog,
    l2_error,
    load_function,
    read_geometry_file,
    run_convergence_study,
    write_geometry_file,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
