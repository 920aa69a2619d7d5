"""Vehicle-bridge interaction simulator.

Coupled (iterative partitioned) and decoupled (moving load plus base
excitation) analysis of Euler-Bernoulli bridges crossed by mass-
spring-dashpot vehicles, with ISO 8608 roughness synthesis, built-in
benchmark configurations, and parametric studies.
"""

from ._kernels import HAVE_NATIVE, active_backend_name
from .analysis import (
    ComparisonReport,
    Window,
    benchmark_config,
    compare_series,
    iteration_stats,
    on_bridge_window,
    r_squared,
    sweep,
)
from .beam import (
    BridgeMesh,
    BridgeModel,
    BridgeState,
    NewmarkOperator,
    assemble,
    build_mesh,
    eigen_frequencies,
    make_newmark,
    rayleigh_coefficients,
    step,
)
from .coupling import (
    ScenarioConfig,
    SimulationResult,
    TrafficSpec,
    Trajectory,
    contact_input,
    interpolate_bridge,
    make_fleet,
    map_forces,
    run_coupled,
    run_decoupled,
    simulate,
    traffic_forces,
)
from .roughness import (
    RoughnessProfile,
    RoughnessSpec,
    evaluate as evaluate_roughness,
    generate as generate_roughness,
    psd_estimate,
)
from .vehicle import (
    OneAxleComp,
    OneAxleSimple,
    TwoAxleComp1,
    TwoAxleComp2,
    TwoAxleComp3,
    VehicleState,
    VehicleSystem,
    build_system,
    natural_frequencies,
    static_axle_forces,
    step_imposed,
)

__version__ = "0.1.0"
