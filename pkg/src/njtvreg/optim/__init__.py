from njtvreg.optim.powell import (
    BracketError,
    NonFiniteError,
    PowellResult,
    StoppingCriteria,
    brent_minimize,
    powell_minimize,
)

__all__ = [
    "BracketError",
    "NonFiniteError",
    "PowellResult",
    "StoppingCriteria",
    "brent_minimize",
    "powell_minimize",
]
