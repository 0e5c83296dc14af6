"""Surface-code decoding workbench.

Rotated-surface-code geometry, phenomenological noise sampling,
classical MWPM / union-find decoders, a from-scratch transformer decoder
with its own reverse-mode autodiff, and the two-stage (model + global
decoder) evaluation pipeline.
"""

__version__ = "0.1.0"
