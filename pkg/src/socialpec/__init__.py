"""Social pattern-extraction convolution for pedestrian trajectory prediction."""
from .diffcore import AdamConfig, ParamStore, Tensor, seeded_rng
from .encoder import CONTEXT_ENCODER, TARGET_ENCODER, EncoderConfig, encode, shape_plan
from .evalkit import MetricReport, ade, best_of_n, fde, linear_baseline
from .head import LocationDistribution, build_gaussian, build_gmm, log_density, sample
from .pec import MotionPatternBank, init_bank, pec_forward
from .predictor import LocPredictor, ModelConfig, PredictionRollout, init_params, loc_predict, traj_predict
from .trajkit import EgoFrame, Scene, State, Trajectory, convert, convert_back, ego_frame_of
from .train import TrainConfig, TrainReport, step_loss, train

__version__ = "0.1.0"
