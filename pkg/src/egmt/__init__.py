"""egmt: entity-guided multi-task infrared/visible image fusion.

CPU-only reference implementation: a from-scratch reverse-mode autodiff
core over numpy, the fusion network with its entity-guided attention
stages, training with uncertainty-weighted multi-task losses, and a full
evaluation suite for fusion quality and multi-label classification.
"""

__version__ = "0.1.0"
