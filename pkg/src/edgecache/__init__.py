"""Location-differentiated edge caching with a per-node linear UCB learner."""
from .bandit import (NodeLearnerState, Score, Scores, alpha, estimate_theta, init_state,
                     perturbation, predict, score_all, select_top_c, update)
from .core import (ConfigError, DemandHistory, DemandWindow, PrecomputedFeatures, SimConfig,
                   WindowMeans, cap_norm, extract_features)
from .engine import (RunReport, SlotResult, compute_regret, hindsight_per_slot, hindsight_static,
                     replay, run)
from .workload import (SyntheticSpec, SyntheticWorkload, Trace, TraceFormatError, ZipfSpec,
                       derive_node_traces, gen_synthetic, gen_zipf_trace, load_trace, save_trace)

__version__ = "0.1.0"
