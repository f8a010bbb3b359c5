"""Convolutional autoencoders with hand-written forward and reverse mode."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import LayerSpec, elu
from .network import (Architecture, Autoencoder, Scaler, build_autoencoder, decode,
                      decode_with_jacobian, decoder_jacobian, decoder_jvp, decoder_vjp,
                      desk_architecture, encode, evaluate_losses, fit_scaler, grad_total,
                      linear_autoencoder, loss_data, loss_sympl, loss_total,
                      reference_architecture, value_and_grad)
from .training import AdamState, History, TrainConfig, TrainingError, adam_step, train

__all__ = [
    "AdamState", "Architecture", "Autoencoder", "CheckpointError", "History", "LayerSpec",
    "Scaler", "TrainConfig", "TrainingError", "adam_step", "build_autoencoder", "decode",
    "decode_with_jacobian", "decoder_jacobian", "decoder_jvp", "decoder_vjp",
    "desk_architecture", "elu", "encode", "evaluate_losses", "fit_scaler", "grad_total",
    "linear_autoencoder", "load_checkpoint", "loss_data", "loss_sympl", "loss_total",
    "reference_architecture", "save_checkpoint", "train", "value_and_grad",
]
