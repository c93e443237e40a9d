"""CH-inequality tests on many pairs measured globally with vote binarization."""

from .bell_eval import (
    ChInputSet,
    ChValue,
    OptimizerSpec,
    Scenario,
    ScenarioEvaluator,
    ThresholdResult,
    ch_value,
    critical_efficiency,
    evaluate_ch,
    is_violation,
    maximize_ch,
    noise_resistance,
    reid_s,
)
from .entanglement_measures import (
    EntanglementReport,
    entanglement_distinguishable,
    entanglement_indistinguishable,
    ratio_report,
)
from .errors import ConfigurationError, InvalidInputError, UndefinedMetricError
from .pair_core import (
    BlochVector,
    FourAngleSettings,
    PairOutcomeDist,
    PairState,
    PlanarSettings,
    expand_settings,
    single_pair_probs,
)
from .symmetric_fock import (
    NoiseChannelSpec,
    SpinRotation,
    SymmetricState,
    apply_one_loss_each_side,
    apply_rotation_noise,
    count_distribution,
    phi_state,
    vote_probs_symmetric,
    wigner_d,
)
from .vote_tally import (
    MAJORITY,
    THREE_QUARTERS,
    TWO_THIRDS,
    UNANIMITY,
    ChInputs,
    CountJointDistribution,
    DetectionModel,
    VoteRule,
    count_distribution_with_efficiency,
    one_loss_each_side_distribution,
    ternary_vote_probs,
    vote_joint,
    vote_marginal,
    vote_probs_with_efficiency,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
