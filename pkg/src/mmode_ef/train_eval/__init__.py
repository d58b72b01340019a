"""Training, evaluation, experiment drivers and cost reports."""

from mmode_ef.train_eval.config import TrainConfig, dump_config, load_config, parse_config_text
from mmode_ef.train_eval.data import StackStore
from mmode_ef.train_eval.metrics import (
    EvalReport,
    auprc,
    auroc,
    evaluate_predictions,
    mae,
    r2,
    rmse,
)
from mmode_ef.train_eval.training import (
    History,
    evaluate,
    finetune,
    predict,
    pretrain_contrastive,
    train_supervised,
)
