"""Passive Wi-Fi CSI sensing toolkit.

Synthetic SIMO channel simulation, CSI preprocessing, from-scratch recurrent
networks (RNN / LSTM / GRU / Bi-GRU) for joint activity recognition, user
authentication and tracking, plus ensembling, confidence thresholding and
least-squares trajectory evaluation.
"""

from .csi import (ACTIVITIES, AREA_X, AREA_Y, Annotation, CsiStream, Frame,
                  SimoConfig, annotation_at, load_manifest, load_stream,
                  save_manifest, save_stream, validate_stream)
from .errors import (ConfigError, DataError, NumericError, SensekitError,
                     TrainingError)
from .preprocess import (FrameDataset, PreprocessConfig, balance_classes,
                         butterworth_lowpass, detect_dead_subcarriers,
                         make_frames, preprocess_splits, sparsity_reduce)
from .simulate import (BodyModel, MotionScript, SceneConfig, generate_dataset,
                       make_users, simulate_trial)
from .tasks import (MultiTaskWeights, Prediction, TaskModelSpec, authenticate,
                    build_task_model, classify_activity, ensemble_predict,
                    multitask_loss, robustness_report)
from .evaluate import (classification_metrics, coordinate_mse, fit_trajectory,
                       trajectory_svg)

__version__ = "0.1.0"
