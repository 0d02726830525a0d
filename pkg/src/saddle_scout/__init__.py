"""
Saddle Scout - solution landscapes of constrained energies

High-index saddle dynamics on equality-constrained manifolds, downward and
upward landscape searches, and two problem packs (Thomson, 2D BEC).
"""

__version__ = "1.0.0"
