"""Experiments with sequences of rational maps between polydiscs and projective spaces.

Submodules: ``exactalg`` (exact polynomial arithmetic), ``maps`` (rational
maps, composition, indeterminacy), ``graphgeom`` (graph clouds, Hausdorff
distances, graph volumes), ``converge`` (convergence testers),
``dynamics`` (Fatou grids of self-maps of CP^2), ``scenario`` and ``cli``.
"""

from .exactalg import GaussianRational, HomoPoly, MerodynError
from .maps import (
    MapFamily,
    ProjectivePoint,
    RationalMap,
    affine,
    compose,
    cremona,
    from_text,
    identity,
    indeterminacy_locus,
    iterate,
    point_image,
    projective,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianRational", "HomoPoly", "MerodynError", "MapFamily", "ProjectivePoint", "RationalMap",
    "affine", "compose", "cremona", "from_text", "identity", "indeterminacy_locus", "iterate",
    "point_image", "projective",
]
