"""Explainable lane-change prediction.

A layer-normalized LSTM classifier over short observation windows of a
vehicle and its six regional neighbours, a relevance-propagation engine with
a dedicated rule for the normalization sites, an integrated-gradients
baseline, a perturbation-based faithfulness harness, a synthetic highway twin
that generates data and live frame streams, and a session broker serving live
predictions with explanations.
"""

from .errors import (DivisionHazardError, FrameParseError, NumericError,
                     ShapeError, TrainingDiverged, ValidationError,
                     WindowNotReady, XlaneError)
from .features import (CLASS_NAMES, FEATURE_NAMES, N_CLASSES, N_FEATURES,
                       N_INPUT, N_SLOTS, N_STEPS, PREDICTION_HORIZON,
                       QUERY_SLOT, SLOT_NAMES, STEP_SPACING, ObservationWindow,
                       VehicleFeatures, WindowDataset, sentinel_features)
from .model import (ActivationTrace, LayerNormParams, LnLstmParams,
                    PredictionOutput, forward, forward_batch, init_params,
                    input_gradient, input_gradient_batch, layer_norm_forward,
                    load_model, lstm_step, save_model)
from .lrp import (LrpConfig, RelevanceMap, SinkLedger, explain, explain_batch,
                  lrp_accumulate, lrp_copy, lrp_epsilon, lrp_gate,
                  lrp_identity_ln, lrp_omega)
from .ig import IgConfig, completeness_gap, integrated_gradients
from .explanation import (SuperFeatureExplanation, aggregate_super,
                          aggregate_time, top_k)
from .training import Hyperparams, TrainResult, train

__version__ = "0.1.0"
