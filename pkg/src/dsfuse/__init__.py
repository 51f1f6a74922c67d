"""dsfuse: Dempster-Shafer fusion of evidential classifiers.

Prototype-based evidential classifiers emit mass functions on heterogeneous
frames of discernment; a fusion module combines them by Dempster's rule on a
common refinement; decisions use the pignistic transform; the whole pipeline
is differentiable and fine-tunable on soft-labelled data.
"""

from .autodiff import BACKEND
from .belief import (
    ClassSubset,
    Frame,
    MassFunction,
    PignisticDistribution,
    Refining,
    belief,
    combine,
    conflict_degree,
    decide,
    make_frame,
    make_mass,
    make_refining,
    pignistic,
    plausibility,
    vacuous_extend,
    vacuous_mass,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ClassSubset", "Frame", "MassFunction", "PignisticDistribution",
    "Refining", "belief", "combine", "conflict_degree", "decide", "make_frame",
    "make_mass", "make_refining", "pignistic", "plausibility", "vacuous_extend",
    "vacuous_mass", "__version__",
]
