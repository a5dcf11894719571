"""Recurrence-based monitoring of aggregate current signals.

The pipeline: extract recurrence quantification features from sliding
windows of per-device and aggregate current readings, project them onto a
two-dimensional plane, learn a density map of normal usage, and calibrate a
crossing-count alarm that flags unexpected devices or degraded machines in
newly monitored aggregate data.
"""

__version__ = "0.1.0"

from .alarm import (
    AlarmPolicy,
    AlarmReport,
    ProfileLibrary,
    alarm_rate,
    calibrate,
    count_day_crossings,
    evaluate,
    simulate_counts,
    threshold_from_quantile,
)
from .errors import (
    CompatibilityError,
    CsvFormatError,
    DegenerateModelError,
    FaultInjectionError,
    RqamonError,
    UsageError,
    ValidationError,
)
from .pca import PcaModel, Point2D, fit, load_model, project, project_rows, save_model
from .recurrence import (
    DistanceMatrix,
    RecurrenceMatrix,
    distance_matrix,
    recurrence_matrix,
)
from .rqa import (
    LineLengthDistribution,
    RqaFeatureSeries,
    RqaFeatures,
    RqaParams,
    diagonal_lines,
    line_entropy_bits,
    rqa_features,
    sliding_rqa,
    vertical_lines,
)
from .synth import (
    DeviceSpec,
    FaultSpec,
    generate_device,
    generate_library,
    load_archetypes,
    make_faulty,
)
from .timeseries import (
    TimeSeries,
    WorkCalendar,
    filter_closed_days,
    interpolate_to_minutes,
    parse_csv,
    split_days,
    sum_signals,
)
from .usage_map import (
    GridSpec,
    UsageMap,
    build_map,
    contains,
    count_outside,
    load_map,
    map_id,
    save_map,
)

__all__ = [name for name in dir() if not name.startswith("_")]
