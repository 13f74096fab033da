"""Video person re-identification from representative walking-cycle frames.

Pipeline: motion-energy cycle detection -> representative frame sampling
-> per-frame features -> element-wise pooling -> PCA + KISSME metric ->
cross-camera ranking with CMC evaluation.
"""

__version__ = "0.1.0"
