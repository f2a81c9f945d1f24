"""Large deviations of empirical link measures in coloured random graphs."""

from .legendre import (
    AbsoluteContinuityError,
    DualSolveReport,
    divergence_witness,
    dual_value,
    legendre_sup,
    optimal_tilt,
    truncate_test_function,
    truncation_gap,
)
from .measures import (
    Kernel,
    MeasureError,
    PairMeasure,
    TestFunction,
    TypeAlphabet,
    TypeLaw,
    kullback_action,
    mcmillan_entropy,
    product_measure,
    spectral_potential,
)
from .montecarlo import Estimate, EstimatorConfig, is_event_probability, mc_event_probability, rate_estimate
from .oracle import (
    count_graphs,
    config_log_probability,
    event_log_probability,
    mcmillan_count_report,
    naive_enumerate,
    rate_infimum,
)
from .process import (
    ColouredGraph,
    ConnectionSchedule,
    Event,
    empirical_pair_measure,
    empirical_type_measure,
    importance_weight,
    sample_graph,
    sample_graph_conditional,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
