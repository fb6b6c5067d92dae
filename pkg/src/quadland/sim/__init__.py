from .flightlog import FlightLog, FlightLogBuilder, COLUMNS, SCHEMA_VERSION
from .harness import (DivergenceError, ExcitationConfig, NoiseConfig,
                      RateConfig, equilibrium_hover_u, run_closed_loop)
from .scenarios import (OraclePredictor, Scenario, collect_reference,
                        collect_scenario, ellipse_scenario, hover_scenario,
                        landing_scenario, run_scenario,
                        table_collect_scenario, field_provenance)
from .metrics import (Metrics, evaluate, measured_rho, rms_error,
                      edge_band_variance, envelope_violation_count)
from .heatmap import HeatmapSlice, heatmap_slice, fig_slice_conditions

__all__ = [
    "FlightLog", "FlightLogBuilder", "COLUMNS", "SCHEMA_VERSION",
    "DivergenceError", "ExcitationConfig", "NoiseConfig", "RateConfig",
    "equilibrium_hover_u", "run_closed_loop",
    "OraclePredictor", "Scenario", "collect_reference", "collect_scenario",
    "ellipse_scenario", "hover_scenario", "landing_scenario", "run_scenario",
    "table_collect_scenario", "field_provenance",
    "Metrics", "evaluate", "measured_rho", "rms_error", "edge_band_variance",
    "envelope_violation_count",
    "HeatmapSlice", "heatmap_slice", "fig_slice_conditions",
]
