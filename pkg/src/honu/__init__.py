"""Higher-order neural units (LNU/QNU) for plant identification and control."""
from .controller import (
    ClosedLoopResult,
    ControllerState,
    DesiredProfile,
    build_xi,
    controller_output,
    run_closed_loop,
    tune_controller,
)
from .core import (
    LinearUnit,
    QuadraticUnit,
    RegressorLayout,
    build_regressor,
    lnu_predict,
    qnu_predict,
    quadratic_expand,
)
from .errors import ConfigurationError, DivergenceError, HonuError
from .identification import IdentifiedModel, evaluate, identify, rmse
from .plant import ExcitationSpec, PlantParams, PlantSimulator, generate_dataset
from .series import TimeSeries
from .training import (
    LearningConfig,
    TrainingReport,
    bptt_lm_update,
    finite_difference_gradient,
    normalized_rate,
    rtrl_step_lnu,
    rtrl_step_qnu,
    train_epochs,
)

__version__ = "0.1.0"
