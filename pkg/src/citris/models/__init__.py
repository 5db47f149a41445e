from .assignment import AssignmentPsi, blocks_from_assignment
from .autoencoder import StateAutoencoder
from .checkpoint import checkpoint_meta, load_checkpoint, save_checkpoint
from .classifier import TargetClassifier, conditional_marginals
from .flow import CitrisNF, Flow
from .transition import BaselinePrior, TransitionPrior
from .vae import CitrisVAE, IVAEStar, TrainingError, reparameterize

__all__ = [
    "AssignmentPsi", "BaselinePrior", "CitrisNF", "CitrisVAE", "Flow",
    "IVAEStar", "StateAutoencoder", "TargetClassifier", "TrainingError",
    "TransitionPrior", "blocks_from_assignment", "checkpoint_meta",
    "conditional_marginals", "load_checkpoint", "reparameterize",
    "save_checkpoint",
]
