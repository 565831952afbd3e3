"""finslerlab — numerical laboratory for Finsler geodesic flows on surfaces.

The package is organized bottom-up:

- :mod:`finslerlab.surfaces`   chart bookkeeping (plane, torus, sphere);
- :mod:`finslerlab.norms`      chart-norm metrics, duals, Legendre maps;
- :mod:`finslerlab.flow`       Hamiltonian flows, integrator, trajectories;
- :mod:`finslerlab.geodesy`    distances, geodesic discs;
- :mod:`finslerlab.lens`       simple discs, lens maps, grids, integrals;
- :mod:`finslerlab.bumps`      compactly supported symplectic bumps;
- :mod:`finslerlab.hybrid`     flow + override-map hybrid systems;
- :mod:`finslerlab.closing`    recurrence, closing constructions, census;
- :mod:`finslerlab.contact`    contact-type checks for level sets;
- :mod:`finslerlab.experiments` end-to-end experiments behind the CLI.
"""

from .bumps import (
    SymplecticBump,
    calibrate_bump_constant,
    make_bump,
    perturb_lens,
    reversible_symmetrize,
    sampled_cr_size,
)
from .errors import (
    BudgetError,
    CertificationError,
    ContactDegeneracyError,
    DomainError,
    FinslerlabError,
    NumericError,
    TangencyError,
    ValidationError,
)
from .flow import (
    CallableHamiltonian,
    GeodesicHamiltonian,
    Trajectory,
    hamiltonian_vector_field,
    integrate_flow,
    reeb_reparametrize,
)
from .geodesy import (
    GeodesicDisc,
    UnitCovector,
    certify_unit,
    distance,
    geodesic_disc,
    safe_radius,
)
from .lens import (
    BoundaryCovector,
    LensGrid,
    SimpleDisc,
    build_lens_grid,
    check_simple,
    consistency_integral,
    lambda_sigma,
    lens_map,
    load_lens_grid,
    save_lens_grid,
    simplicity_radius,
    symplectic_defect,
)
from .norms import (
    FinslerMetric,
    MetricPerturbation,
    conformal_perturb,
    cr_distance,
    dual_norm,
    eval_metric,
    legendre,
    legendre_inverse,
    localized_perturb,
    make_metric,
    unit_vector,
    verify_metric,
)
from .surfaces import PhasePoint, SurfacePatch

__version__ = "0.1.0"
