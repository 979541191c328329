"""Bidirectional LSTM sequence classifier written directly in numpy."""
from .checkpoint import CheckpointVersionError, load_checkpoint, save_checkpoint
from .features import FeatureStats, featurize, unstandardize
from .lstm import GATES, LstmLayerParams, LstmState, layer_backward, layer_forward, lstm_cell_forward
from .network import (LstmModel, backward, backward_batch, cross_entropy, forward_batch,
                      network_forward, predict_labels, softmax)
from .train import (TrainConfig, TrainingError, TrainResult, chunk_bounds, classify_paths,
                    classify_sequence, dataset_from_paths, train)
