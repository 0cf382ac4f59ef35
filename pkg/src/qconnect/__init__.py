"""Smooth relative connections on quiver bundles over sampled base manifolds."""

__version__ = "0.1.0"

from .bundle import QuiverBundle, check_all_path_ranks, dual_bundle, path_morphism, rank_profile
from .connection import (
    RelativeConnection,
    bianchi_residual,
    compatibility_residual,
    curvature,
    curvature_intertwine_residual,
    dual_connection,
    gauge_transform,
    is_compatible,
    is_flat,
    zero_connection,
)
from .errors import *  # noqa: F401,F403
from .frames import FrameField, complement_in, continue_frame, image_frame, kernel_frame
from .grid import GridManifold, MatrixFormField, exterior_derivative, wedge
from .monodromy import (
    GroupQuiverRep,
    LoopPolyline,
    MonodromyRep,
    QuiverOfGroupReps,
    bundle_from_rep,
    check_intertwining,
    functor_F,
    functor_G,
    monodromy_rep,
    parallel_transport,
)
from .obstruction import (
    QuiverRepPoint,
    beta_fields,
    ext1_dim_point,
    hom_dim_point,
    jet_splitting_check,
    l_map_apply,
    solve_l_map,
)
from .quiver import Path, Quiver, enumerate_paths, new_quiver, root_orientation
from .synthesis import (
    VertexDecomposition,
    an_filtration,
    reverse_arrow_bundle,
    synthesize_An,
    synthesize_general_tree,
    synthesize_tree,
)
