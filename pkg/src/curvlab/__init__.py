"""Numerical laboratory for maximal-gauge 3+1 vacuum evolution, null-cone
geometry, and Littlewood-Paley analysis on 2-spheres, validated against exact
solutions and algebraic identities."""

__version__ = "0.1.0"
