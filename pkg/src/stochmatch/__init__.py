"""Online stochastic matching under Poisson arrivals.

Algorithms, an LP hierarchy with a separation oracle, Monte Carlo and exact
simulation, and numerical verification of competitive-ratio bounds.
"""

from .algorithms import Algo, MatchState, RunResult, run_online
from .lp import (
    LpSolution,
    load_solution,
    save_solution,
    separation_oracle,
    solve_jaillet_lu_lp,
    solve_lp,
)
from .model import (
    FractionalMatching,
    Instance,
    OnlineType,
    WeightClass,
    gen_hardness_edge_weighted,
    gen_jaillet_lu,
    gen_random,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    make_instance,
    save_instance,
    validate,
    zero_matching,
)
from .offline import max_weight_matching, realized_graph
from .simulate import (
    McReport,
    exact_expected_value,
    monte_carlo,
    sample_fixed_arrivals,
    sample_poisson_arrivals,
    unmatched_probability_estimate,
)

__all__ = [
    "Algo",
    "FractionalMatching",
    "Instance",
    "LpSolution",
    "MatchState",
    "McReport",
    "OnlineType",
    "RunResult",
    "WeightClass",
    "exact_expected_value",
    "gen_hardness_edge_weighted",
    "gen_jaillet_lu",
    "gen_random",
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
    "load_solution",
    "make_instance",
    "max_weight_matching",
    "monte_carlo",
    "realized_graph",
    "run_online",
    "sample_fixed_arrivals",
    "sample_poisson_arrivals",
    "save_instance",
    "save_solution",
    "separation_oracle",
    "solve_jaillet_lu_lp",
    "solve_lp",
    "unmatched_probability_estimate",
    "validate",
    "zero_matching",
]

__version__ = "0.1.0"
