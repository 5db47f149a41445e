from .dataset import (Dataset, generate_dataset, load,
                      sample_independent_factors, train_eval_split)
from .environments import (BallInBoxes, Causal3DState, Causal3DTeapot,
                           Environment, EvalFactor, PongState, SyntheticDbn,
                           chain4, env_from_id, indep4, make_env)
from .factors import FactorSpec, circular_distance, encode_state, decode_state
from .observation import ObservationMap
from .policies import (BernoulliPolicy, GroupedPolicy, InterventionPolicy,
                       ZeroPolicy, parse_policy)
from .rng import stream

__all__ = [
    "BallInBoxes", "BernoulliPolicy", "Causal3DState", "Causal3DTeapot",
    "Dataset", "Environment", "EvalFactor", "FactorSpec", "GroupedPolicy",
    "InterventionPolicy", "ObservationMap", "PongState", "SyntheticDbn",
    "ZeroPolicy", "chain4", "circular_distance", "decode_state",
    "encode_state", "env_from_id", "generate_dataset", "indep4", "load",
    "make_env", "parse_policy", "sample_independent_factors", "stream",
    "train_eval_split",
]
