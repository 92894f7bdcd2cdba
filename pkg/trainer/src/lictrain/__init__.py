"""Two-stage trainer for the latentsearch engine.

Stage 1 fits the codec to a rate-distortion objective; stage 2 distills a
teacher's image embeddings into the latent adapter. The result is exported
as a "LICW" weight archive the engine loads directly.
"""

__version__ = "0.1.0"
