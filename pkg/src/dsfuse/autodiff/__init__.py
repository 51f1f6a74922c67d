"""Minimal reverse-mode autodiff used to train and fine-tune fusion pipelines."""

from .engine import BACKEND
from .tape import Node, Tape, grad_check

__all__ = ["BACKEND", "Node", "Tape", "grad_check"]
