from driftbandit.envs.hierarchical import HierarchicalEnv, synth_hier_env
from driftbandit.envs.replayer import ReplayResult, replayer_evaluate, uniform_random_log
from driftbandit.envs.simulator import DriftingLinearEnv, GaussianContexts, LoggedContexts, env_drift, env_step
