"""Connectome-convolutional and fully connected networks in plain numpy."""

from .model import backward, cross_entropy_loss, forward, loss_and_grads, softmax
from .optim import adam_step, optimizer_step, sgd_step
from .params import ParamStore, init_params, load_params, save_params, zero_params
from .spec import ModelSpec, TrainConfig, default_train_config, param_count, param_shapes
from .train import model_inputs, predict, predict_proba, train

__all__ = [
    "ModelSpec", "ParamStore", "TrainConfig", "adam_step", "backward", "cross_entropy_loss",
    "default_train_config", "forward", "init_params", "load_params", "loss_and_grads",
    "model_inputs", "optimizer_step", "param_count", "param_shapes", "predict", "predict_proba",
    "save_params", "sgd_step", "softmax", "train", "zero_params",
]
