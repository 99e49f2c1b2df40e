"""Certified bounds for nonlocal games and norms in presented C*-algebras."""

__version__ = "0.1.0"

from .algebra import AlgebraElement, PovmCandidate, p_min, povm_repair, povm_residual
from .decider import PromiseInstance, decide, replay
from .games import NonlocalGame, classical_value, game_value, resolve_game
from .npa import group_norm_upper, npa_upper_bound, parse_relations
from .polynomial import Polynomial, parse_poly
from .presentations import Presentation, norm_query, softening_sequence
from .sdp import SdpInstance, certify, solve
from .strategies import QuantumStrategy, seesaw_lower_bound

__all__ = [
    "AlgebraElement", "PovmCandidate", "p_min", "povm_repair", "povm_residual",
    "PromiseInstance", "decide", "replay",
    "NonlocalGame", "classical_value", "game_value", "resolve_game",
    "group_norm_upper", "npa_upper_bound", "parse_relations",
    "Polynomial", "parse_poly",
    "Presentation", "norm_query", "softening_sequence",
    "SdpInstance", "certify", "solve",
    "QuantumStrategy", "seesaw_lower_bound",
]
