"""Powell's direction-set method with Brent line searches (derivative-free).

Directions are measured in tolerance units: a unit step along the initial direction ``i`` moves
parameter ``i`` by ``tolerances[i]``. Brent's method follows the Numerical Recipes formulation.
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from njtvreg import Objective
from njtvreg.utils.log import logger

GOLDEN = 0.3819660112501051
MAX_BRACKET_EXPANSIONS = 50
LINE_SEARCH_MAX_ITER = 100
LINE_SEARCH_ABS_TOL = 0.01

TRANSLATION_TOL = 0.02
ROTATION_TOL = 0.001


class BracketError(ValueError):
    """Raised when a bracket (a, b, c) does not satisfy f(b) <= f(a) and f(b) <= f(c) with b between a and c."""


class NonFiniteError(ArithmeticError):
    """Raised when the objective returns a non-finite value."""

    def __init__(self, point, value: float):
        self.point = np.array(point, dtype=np.float64)
        self.value = value
        super().__init__(f"Objective returned {value} at {self.point.tolist()}")


@dataclass
class StoppingCriteria:
    tolerances: Sequence[float] = field(default_factory=lambda: [1e-6])
    max_cycles: int = 64
    line_tol: float = 1e-4

    def __post_init__(self):
        self.tolerances = np.array(self.tolerances, dtype=np.float64).ravel()
        if self.tolerances.size == 0 or not np.all(self.tolerances > 0):
            raise ValueError(f"Tolerances must be positive, got {self.tolerances}")
        if self.max_cycles < 1:
            raise ValueError(f"max_cycles must be >= 1, got {self.max_cycles}")
        if self.line_tol <= 0:
            raise ValueError(f"line_tol must be positive, got {self.line_tol}")

    @classmethod
    def for_rigid(
        cls,
        n_transforms: int = 1,
        translation_tol: float = TRANSLATION_TOL,
        rotation_tol: float = ROTATION_TOL,
        **kwargs,
    ) -> "StoppingCriteria":
        """Tolerances for ``n_transforms`` stacked se(3) vectors: mm for translations, algebra units for rotations."""
        per_transform = [translation_tol] * 3 + [rotation_tol] * 3
        return cls(tolerances=per_transform * n_transforms, **kwargs)


class PowellResult(NamedTuple):
    x: np.ndarray
    fun: float
    cycles: int
    n_evals: int
    history: list[float]


def _check_bracket(f: Callable[[float], float], bracket) -> tuple[float, float, float, float]:
    a, b, c = (float(v) for v in bracket)
    if not (min(a, c) < b < max(a, c)):
        raise BracketError(f"Middle point {b} is not strictly between {a} and {c}")
    fa, fb, fc = f(a), f(b), f(c)
    if not (fb <= fa and fb <= fc):
        raise BracketError(f"Invalid bracket: f({a})={fa}, f({b})={fb}, f({c})={fc}")
    return a, b, c, fb


def _brent(
    f: Callable[[float], float],
    a: float,
    b: float,
    c: float,
    fb: float,
    *,
    rel_tol: float,
    abs_tol: float,
    max_iter: int,
) -> tuple[float, float]:
    a, c = min(a, c), max(a, c)
    x = w = v = b
    fx = fw = fv = fb
    d = e = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (a + c)
        tol1 = rel_tol * abs(x) + abs_tol
        tol2 = 2.0 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (c - a):
            break
        golden_step = True
        if abs(e) > tol1:
            # parabola through (x, fx), (w, fw), (v, fv)
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev, e = e, d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (c - x):
                d = p / q
                u = x + d
                if u - a < tol2 or c - u < tol2:
                    d = tol1 if x < mid else -tol1
                golden_step = False
        if golden_step:
            e = (c - x) if x < mid else (a - x)
            d = GOLDEN * e
        u = x + d if abs(d) >= tol1 else x + math.copysign(tol1, d)
        fu = f(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                c = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                c = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def brent_minimize(
    f: Callable[[float], float],
    bracket: tuple[float, float, float],
    *,
    rel_tol: float = math.sqrt(np.finfo(float).eps),
    abs_tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Minimise a 1D function inside a bracket (a, b, c) with f(b) <= f(a), f(c)."""
    a, b, c, fb = _check_bracket(f, bracket)
    return _brent(f, a, b, c, fb, rel_tol=rel_tol, abs_tol=abs_tol, max_iter=max_iter)


class _CountingObjective:
    def __init__(self, f: Objective):
        self.f = f
        self.n_evals = 0

    def __call__(self, x: np.ndarray) -> float:
        self.n_evals += 1
        value = float(self.f(x))
        if not math.isfinite(value):
            raise NonFiniteError(x, value)
        return value


def _line_minimize(
    f: _CountingObjective, x: np.ndarray, fx: float, direction: np.ndarray, line_tol: float
) -> tuple[np.ndarray, float]:
    """Minimise along ``x + s * direction``; s is in tolerance units."""

    def g(s: float) -> float:
        return fx if s == 0.0 else f(x + s * direction)

    bracket = _bracket(g, fx)
    if bracket is None:
        return x, fx
    a, b, c, gb = bracket
    s, gs = _brent(g, a, b, c, gb, rel_tol=line_tol, abs_tol=LINE_SEARCH_ABS_TOL, max_iter=LINE_SEARCH_MAX_ITER)
    if gs > fx:
        return x, fx
    return x + s * direction, gs


def _bracket(g: Callable[[float], float], g0: float) -> tuple[float, float, float, float] | None:
    """Step +-1, 2, 4, ... tolerance units until the function goes up again."""
    g_plus = g(1.0)
    if g_plus < g0:
        sign, g_cur = 1.0, g_plus
    else:
        g_minus = g(-1.0)
        if g_minus < g0:
            sign, g_cur = -1.0, g_minus
        else:
            return -1.0, 0.0, 1.0, g0
    prev, cur = 0.0, sign
    for _ in range(MAX_BRACKET_EXPANSIONS):
        nxt = 2.0 * cur
        g_next = g(nxt)
        if g_next >= g_cur:
            return prev, cur, nxt, g_cur
        prev, cur, g_cur = cur, nxt, g_next
    logger.debug(f"Line search did not bracket a minimum after {MAX_BRACKET_EXPANSIONS} expansions")
    return None


def powell_minimize(f: Objective, x0, crit: StoppingCriteria | None = None) -> PowellResult:
    """Minimise ``f`` from ``x0``. Stops once no parameter moved by its tolerance in a full cycle."""
    x = np.array(x0, dtype=np.float64).ravel()
    crit = crit or StoppingCriteria()
    tol = np.broadcast_to(crit.tolerances, x.shape).astype(np.float64)
    objective = _CountingObjective(f)
    fx = objective(x)
    directions = np.diag(tol)
    history = [fx]
    cycles = 0
    while cycles < crit.max_cycles:
        cycles += 1
        x_start, f_start = x.copy(), fx
        biggest_drop, i_biggest = 0.0, 0
        for i, direction in enumerate(directions):
            f_before = fx
            x, fx = _line_minimize(objective, x, fx, direction, crit.line_tol)
            if f_before - fx > biggest_drop:
                biggest_drop, i_biggest = f_before - fx, i
        history.append(fx)
        displacement = x - x_start
        if np.all(np.abs(displacement) < tol):
            break
        f_extrapolated = objective(x + displacement)
        if f_extrapolated < f_start:
            t = 2.0 * (f_start - 2.0 * fx + f_extrapolated) * (f_start - fx - biggest_drop) ** 2
            t -= biggest_drop * (f_start - f_extrapolated) ** 2
            if t < 0.0:
                new_direction = displacement / np.max(np.abs(displacement) / tol)
                x, fx = _line_minimize(objective, x, fx, new_direction, crit.line_tol)
                history[-1] = fx
                directions[i_biggest] = directions[-1]
                directions[-1] = new_direction
    logger.debug(f"Powell finished after {cycles} cycles, {objective.n_evals} evaluations, f={fx:.6g}")
    return PowellResult(x, fx, cycles, objective.n_evals, history)
