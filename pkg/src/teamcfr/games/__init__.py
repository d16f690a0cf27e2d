"""Concrete team-adversary games."""

from teamcfr.games.goofspiel import GoofspielGame, GoofspielSpec, goofspiel_game
from teamcfr.games.nest import NestGame, NestSpec, grid_edges, load_adjacency, nest_game
from teamcfr.games.tiny import TinyMatrixGame, TinyMatrixSpec, tiny_matrix_game

__all__ = [
    "GoofspielGame", "GoofspielSpec", "goofspiel_game",
    "NestGame", "NestSpec", "grid_edges", "load_adjacency", "nest_game",
    "TinyMatrixGame", "TinyMatrixSpec", "tiny_matrix_game",
]
