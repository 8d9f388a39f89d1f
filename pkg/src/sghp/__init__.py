"""Sigmoid-gated Hawkes process: simulation, training and evaluation."""

from .data import Dataset, DatasetError, Event, EventSequence, parse_dataset, split_dataset, validate, write_dataset
from .hawkes import HawkesSpec, appendix_a_spec, compensator_rescale, simulate_dataset, simulate_sequence
from .model import GateKernelParams, ModelConfig, ModelParams, gated_kernel, kernel_params, sequence_loss
from .training import TrainConfig, TrainReport, evaluate_loss, train

__version__ = "0.1.0"
