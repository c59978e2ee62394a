"""Few-photon Rydberg-polariton propagation: steady states, correlations,
multiband dispersion, and vortex topology in a one-dimensional cloud."""

from .core import (
    AtomicParams,
    GridSpec,
    JacobiCoords,
    MediumProfile,
    blockade_radius,
    density_profile,
    interaction_parameters,
    jacobi_forward,
    jacobi_inverse,
    jacobi_matrix,
    pair_potential_well,
    potential_vn,
    vdw_pair,
)
from .single import (
    SinglePolaritonState,
    single_dispersion_shift,
    solve_single_steady,
)
from .bands import (
    BandModel,
    DispersionBands,
    bands_four,
    bands_n,
    bands_three,
    bands_two,
    schrodinger_two,
    track_bands,
    warping_metric,
)
from .evolver import (
    NUMERICAL_LIGHT_SPEED,
    BoundaryData,
    HierarchyResult,
    PolaritonField,
    SteadyResult,
    Stepper,
    component_index,
    component_labels,
    hierarchical_solve,
    local_matrix,
    single_fixed_point,
    solve_steady,
    step_three,
    step_two,
    sweep_steady,
    zero_field,
)
from .planewave import (
    PlaneWaveBasis,
    PropagationResult,
    evaluate_field,
    multiband_operator,
    planewave_propagate,
    singleband_operator,
    v3_components,
)
from .correlations import (
    CorrelationMap,
    conditional_single_after_one,
    conditional_two_after_one,
    default_tau_grid,
    g2_phi2,
    g3_phi3,
    to_jacobi_times,
)
from .topology import (
    PhaseDiagram,
    Vortex2D,
    VortexSet,
    VortexTube,
    find_vortices_2d,
    phase_gradient_magnitude,
    scan_phase_diagram,
    trace_vortex_tubes_3d,
    winding_number,
)
from .config import ConfigError, RunConfig, default_threads, load_config
from .io import (
    ContainerError,
    load_field,
    parse_slice,
    read_columns,
    read_container,
    regrid_and_export,
    save_field,
    write_columns,
    write_container,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
