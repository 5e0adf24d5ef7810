"""Thread algebra with cyclic interleaving, services, restriction and forking.

The package normalizes thread terms with the axioms of the calculus, checks
equality up to a projection depth, experiments with the projective-limit
model, and extracts and runs programs in a small fork-capable assembly
notation.
"""

from .basic import basic_eq, canonicalize, depth, is_basic
from .engine import Normalizer, first_level_normalize, normalize, normalize_traced, proj_normalize
from .syntax import parse_term, render
from .terms import (
    D,
    S,
    TAU,
    Call,
    Csi,
    Fix,
    ForkPcc,
    Md,
    NtIl,
    NtJava,
    Nu,
    Opaque,
    Pcc,
    Proj,
    S2d,
    Term,
    Use,
    Var,
    act,
    guarded_in,
    md,
    name_analysis,
    prefix,
    subst_spot,
    subst_var,
    tau,
)

__all__ = [
    "D", "S", "TAU", "Call", "Csi", "Fix", "ForkPcc", "Md", "NtIl", "NtJava", "Nu", "Opaque",
    "Pcc", "Proj", "S2d", "Term", "Use", "Var", "act", "basic_eq", "canonicalize", "depth",
    "first_level_normalize", "guarded_in", "is_basic", "md", "name_analysis", "normalize",
    "normalize_traced", "Normalizer", "parse_term", "prefix", "proj_normalize", "render",
    "subst_spot", "subst_var", "tau",
]
