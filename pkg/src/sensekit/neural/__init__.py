from .cells import (GruParams, LstmParams, RnnParams, bigru_sequence, gru_step,
                    lstm_step, rnn_step, run_sequence, sigmoid)
from .layers import (Adam, BiGruLayer, Dense, GruLayer, LstmLayer, MeanPool,
                     RnnLayer, mse_loss, softmax, softmax_cross_entropy)
from .model import (CELLS, HEAD_KINDS, SequenceModel, TrainConfig,
                    load_checkpoint, save_checkpoint, train_model)

__all__ = [
    "GruParams", "LstmParams", "RnnParams", "sigmoid",
    "gru_step", "rnn_step", "lstm_step", "run_sequence", "bigru_sequence",
    "Dense", "GruLayer", "RnnLayer", "LstmLayer", "BiGruLayer", "MeanPool",
    "Adam", "softmax", "softmax_cross_entropy", "mse_loss",
    "SequenceModel", "TrainConfig", "train_model",
    "save_checkpoint", "load_checkpoint", "CELLS", "HEAD_KINDS",
]
