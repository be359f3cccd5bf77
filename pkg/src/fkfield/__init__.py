"""Lattice construction of the critical Ising magnetization field via
random-cluster area measures, with estimators for its scaling checks."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    Annulus, Disc, LatticeSpec, LatticeGraph, Window,
    build_lattice, classify_point, disc_graph, rect_lattice, site_subgraph,
)
from .sampler import (  # noqa: F401
    CouplingSpec, Ensemble, ExactObservables, Schedule,
    critical_point, exact_enumerate, load_ensemble, run_chain, run_chains,
    save_ensemble, sw_sweep,
)
from .clusters import (  # noqa: F401
    ClusterLabeling, ClusterStats, LoopSet, SpinConfig,
    cluster_stats, color_clusters, label_clusters, loops_to_json,
    trace_medial_loops,
)
from .field import (  # noqa: F401
    AreaMeasureFamily, ScaleFactorEstimate, TestFunction,
    cutoff_field_value, field_covariance_given_clusters, field_value,
    gaussian_bump, indicator, potts_signs, product_integral,
    rescaled_area_family, scale_factor,
)
from .config import (  # noqa: F401
    ConfigError, ExperimentConfig, parse_config, schema_text, serialize_config,
)
from .experiments import (  # noqa: F401
    OracleReport, run_experiment, sample_ensembles, verify_against_oracle,
)
