"""NAND circuit synthesis from truth tables."""

from ._logicforge import (
    Circuit,
    ConfigError,
    ParseError,
    ShapeError,
    SizeError,
    ValidationError,
    aig_to_nand,
    bitsd,
    dag_search,
    generate_prior,
    improvement_percent,
    synthesize,
    tokenize,
)

__all__ = [
    "Circuit",
    "ConfigError",
    "ParseError",
    "ShapeError",
    "SizeError",
    "ValidationError",
    "aig_to_nand",
    "bitsd",
    "dag_search",
    "generate_prior",
    "improvement_percent",
    "synthesize",
    "tokenize",
]
