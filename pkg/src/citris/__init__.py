"""Causal representation learning from temporal intervened sequences.

Simulated causal processes with intervention labels, CITRIS-style latent
variable models (VAE, pretrained-autoencoder + normalizing flow, iVAE*
baseline), disentanglement metrics, and temporal causal graph extraction.
"""

__version__ = "0.1.0"
