"""Pointer network, critic and their REINFORCE trainer, in plain numpy."""
from .kernel import Adam, AdamConfig, Param
from .pointer import CriticModel, DecodeMode, PtrNetModel, critic_forward, decode, encode
from .train import TrainConfig, TrainLog, load_checkpoint, save_checkpoint, train
