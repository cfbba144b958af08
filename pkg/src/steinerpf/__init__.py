"""Phase-field minimization whose sublevel sets recover Steiner trees."""

from .core import (
    ConvexPolygon,
    CurveBundle,
    DiscreteMeasure,
    Domain,
    GeometryError,
    Grid,
    ParameterError,
    Params,
    Polyline,
    ScalarField,
    make_params,
    point_in_omega0,
    polyline_length,
    straight_bundle,
)
from .geodesic import (
    DistanceField,
    GeodesicError,
    distance_field,
    distance_to_set,
    path_integral,
    shortest_path,
)
from .curves import (
    AhlforsReport,
    ahlfors_scan,
    enforce_ahlfors,
    replace_arc,
    reparametrize_constant_speed,
    tube_covering,
)
from .elliptic import (
    CurveMassForm,
    EllipticSolution,
    SolverError,
    curve_mass_form,
    diffuse_energy,
    solve_potential,
)
from .optimizer import (
    EnergyBreakdown,
    SolveTrace,
    alternate,
    best_curves,
    continuation,
    energy,
)
from .steiner import SteinerTree, exact_steiner, fermat_point, mst_length
from .analysis import (
    compare_distance_fields,
    hausdorff,
    quantize_measure,
    sublevel_set,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
