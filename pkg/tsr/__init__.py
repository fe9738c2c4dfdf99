"""
Two-stage statistical reconstruction of two-phase microstructures.

Stage one synthesizes a surrogate cluster library matching each inclusion's
area, interface and edge-distance statistics; stage two anneals the cluster
positions so the entropic descriptors match the target.
"""

__version__ = "1.0.0"
