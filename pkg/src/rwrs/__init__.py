"""Random walk in random scenery: simulation and rare-event estimation.

X_n = sum_{k<=n} eta(S_k) for a lattice walk S and an i.i.d. exponential-power
scenery eta.  Submodules:

* :mod:`rwrs.walk` -- paths, local times, sojourn and return statistics
* :mod:`rwrs.scenery` -- the scenery law, its tail and log-MGF
* :mod:`rwrs.process` -- X_n and its second moment
* :mod:`rwrs.tail` -- estimators of P(X_n >= n y) and the exponent fit
* :mod:`rwrs.partition` -- local-time level sets behind the upper bound
* :mod:`rwrs.bellshape` -- grid densities, convolution and tail comparisons
"""

from .estimates import MeanEstimate, TailEstimate
from .partition import PartitionScheme, RegimeViolation, build_scheme, classify
from .process import RwrsSample, evaluate_x, sample_rwrs, second_moment
from .scenery import SceneryDistribution, SceneryField, log_mgf, log_tail, sample
from .tail import fit_exponent, lower_bound, naive_tail, tilted_tail
from .walk import (
    LocalTimeField,
    Path,
    Region,
    WalkConfig,
    estimate_return_prob,
    local_times,
    simulate_path,
    sojourn_time,
)

__version__ = "0.1.0"

__all__ = [
    "LocalTimeField",
    "MeanEstimate",
    "PartitionScheme",
    "Path",
    "Region",
    "RegimeViolation",
    "RwrsSample",
    "SceneryDistribution",
    "SceneryField",
    "TailEstimate",
    "WalkConfig",
    "build_scheme",
    "classify",
    "estimate_return_prob",
    "evaluate_x",
    "fit_exponent",
    "local_times",
    "log_mgf",
    "log_tail",
    "lower_bound",
    "naive_tail",
    "sample",
    "sample_rwrs",
    "second_moment",
    "simulate_path",
    "sojourn_time",
    "tilted_tail",
]
