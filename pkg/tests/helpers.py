"""Shared fixtures for the ANOVA tests."""

import numpy as np

from influnet.analysis import design_matrix
from influnet.scenarios import ExperimentRecord, grid_specs


def grid_records(y_time, y_reach=None):
    """48 records over the real grid layout with the given responses."""
    out = []
    k = 0
    for spec in grid_specs(100):
        for rep in range(4):
            out.append(ExperimentRecord(
                spec_id=spec.spec_id, replicate=rep, o_dist=spec.o_dist, i_dist=spec.i_dist,
                modularity_regime=spec.modularity_regime, initiator_rule=spec.initiator_rule,
                total_time=float(y_time[k]), reach=1.0 if y_reach is None else float(y_reach[k]),
                realized_modularity=0.0, realized_avg_degree=10.0))
            k += 1
    return out


def planted(rng, effect=0.0, sd=0.1):
    X, cols = design_matrix(grid_records(np.ones(48)))
    log_t = effect * X[:, cols.index("capacity[gamma_shifted]")] + sd * rng.standard_normal(48)
    return grid_records(np.exp(log_t))
