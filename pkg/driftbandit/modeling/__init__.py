from driftbandit.modeling.bandit import BanditPolicy, Interaction, PathInteraction, chosen_arm
from driftbandit.modeling.drift import DriftPolicy, DriftPolicyConfig
from driftbandit.modeling.flat import FlatPolicy, FlatPolicyConfig
from driftbandit.modeling.hierarchy import HmabPolicy, PathSelection, Taxonomy, validate_taxonomy
from driftbandit.modeling.nig import NigPosterior, linucb_score, nig_sample, nig_update
