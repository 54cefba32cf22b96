"""
Normalizing flow layers, models and checkpoints
"""
from src.flows.checkpoint import load_checkpoint, save_checkpoint
from src.flows.model import FlowModel, build_model, parse_arch

__all__ = ['FlowModel', 'build_model', 'parse_arch', 'load_checkpoint', 'save_checkpoint']
