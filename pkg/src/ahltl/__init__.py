"""Bounded model checking for asynchronous hyperproperties over acyclic
Kripke structures, by reduction to QBF satisfiability."""

from .formula import AhltlFormula, classify_prefix, nnf, parse_formula
from .model import KripkeModel, ModelBundle, bundle_of, is_acyclic, max_depth, parse_model
from .oracle import eval_bounded, eval_pointwise
from .cli import BmcConfig, BmcReport, bmc_check, run_bmc

__all__ = [
    "AhltlFormula", "KripkeModel", "ModelBundle", "BmcConfig", "BmcReport",
    "parse_model", "parse_formula", "bundle_of", "is_acyclic", "max_depth",
    "nnf", "classify_prefix", "eval_bounded", "eval_pointwise",
    "bmc_check", "run_bmc",
]
