"""Grid-impedance sweep analysis: rational fitting, PCC resonance and harmonic compliance."""

__version__ = "0.1.0"

from .errors import GridResError
from .fitting import FitReport, RationalModel, evaluate, fit_auto, fit_rational, initial_poles, passivity_scan
from .harmonics import (
    ComplianceReport,
    HarmonicSpectrum,
    LimitTable,
    check_compliance,
    default_limits,
    percent_of_fundamental,
    propagate,
    thd,
)
from .ingest import (
    EnvelopeStats,
    ImpedanceSweep,
    PolarSample,
    envelope,
    flag_outliers,
    negative_reactance_ranges,
    parse_sweep,
    serialize_sweep,
    to_polar,
)
from .network import (
    OPEN,
    SHORT,
    Capacitor,
    HarmonicNetwork,
    Inductor,
    LclParams,
    Parallel,
    Resistor,
    Scaled,
    Series,
    branch_scaled,
    eval_expr,
    lcl_expr,
    lcl_network,
    lcl_resonance_freq,
    pcc_background_voltage,
    pcc_current_injection,
)
from .resonance import (
    MagnificationMap,
    ResonancePoint,
    branch_count_sweep,
    magnification_map,
    resonance_drift,
    scan_resonances,
)
