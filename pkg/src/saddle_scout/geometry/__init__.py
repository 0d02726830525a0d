from saddle_scout.geometry.space import RealSpace, gram_schmidt, inner, norm, orthonormality_defect
from saddle_scout.geometry.manifold import (
    BlockSpec,
    ConstraintChart,
    EuclideanChart,
    ManifoldChart,
    RetractionKind,
    SphereChart,
    SphereProductChart,
    TransportKind,
)

__all__ = [
    "RealSpace", "gram_schmidt", "inner", "norm", "orthonormality_defect",
    "BlockSpec", "ConstraintChart", "EuclideanChart", "ManifoldChart",
    "RetractionKind", "SphereChart", "SphereProductChart", "TransportKind",
]
