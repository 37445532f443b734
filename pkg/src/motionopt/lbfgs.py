"""Limited-memory BFGS with a strong-Wolfe line search."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 100
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line-search constants need 0 < c1 < c2 < 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    iterations: int
    converged: bool
    grad_norm: float
    message: str
    history: list[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``x, f, iterations, converged = lbfgs_minimize(...)``
        return iter((self.x, self.f, self.iterations, self.converged))


class LineSearchError(RuntimeError):
    pass


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through two points with slopes, or None."""
    with np.errstate(all="ignore"):
        d1 = da + db - 3.0 * (fa - fb) / (a - b)
        disc = d1 * d1 - da * db
        if not np.isfinite(disc) or disc < 0:
            return None
        d2 = np.copysign(np.sqrt(disc), b - a)
        denom = db - da + 2.0 * d2
        if denom == 0:
            return None
        t = b - (b - a) * (db + d2 - d1) / denom
    return t if np.isfinite(t) else None


def _strong_wolfe(phi, f0, d0, alpha, c1, c2, max_evals):
    """Return ``(alpha, value, payload)`` satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, slope, payload)``.  Falls back to the best
    sufficient-decrease point found if the budget runs out; raises
    :class:`LineSearchError` if none was found.
    """
    evals = 0
    best = None

    def probe(a):
        nonlocal evals, best
        evals += 1
        v, dv, payload = phi(a)
        if np.isfinite(v) and v <= f0 + c1 * a * d0 and (best is None or v < best[1]):
            best = (a, v, payload)
        return v, dv, payload

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_evals:
            width = hi - lo
            t = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_edge, hi_edge = sorted((lo + 0.1 * width, hi - 0.1 * width))
            if t is None or not lo_edge <= t <= hi_edge:
                t = lo + 0.5 * width
            v, dv, payload = probe(t)
            if not np.isfinite(v) or v > f0 + c1 * t * d0 or v >= f_lo:
                hi, f_hi, d_hi = t, v, dv
            else:
                if abs(dv) <= -c2 * d0:
                    return t, v, payload
                if dv * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, v, dv
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    prev, f_prev, d_prev = 0.0, f0, d0
    first = True
    while evals < max_evals:
        v, dv, payload = probe(alpha)
        if not np.isfinite(v) or v > f0 + c1 * alpha * d0 or (not first and v >= f_prev):
            found = zoom(prev, f_prev, d_prev, alpha, v, dv)
            break
        if abs(dv) <= -c2 * d0:
            return alpha, v, payload
        if dv >= 0:
            found = zoom(alpha, v, dv, prev, f_prev, d_prev)
            break
        prev, f_prev, d_prev = alpha, v, dv
        alpha *= 2.0
        first = False
    else:
        found = None
    if found is not None:
        return found
    if best is not None:
        return best
    raise LineSearchError("no step satisfying sufficient decrease was found")


def lbfgs_minimize(objective, x0, config: LbfgsConfig = LbfgsConfig()) -> LbfgsResult:
    """Minimize ``objective(x) -> (value, gradient)`` from ``x0``.

    Stops when the Euclidean gradient norm drops to ``grad_tol`` or after
    ``max_iters`` iterations.  Each accepted step strictly decreases the value.
    A failed line search returns the current iterate with ``converged=False``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective or gradient is not finite at the starting point")
    history = [f]
    pairs: deque = deque(maxlen=config.memory)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= config.grad_tol:
        return LbfgsResult(x, f, 0, True, gnorm, "gradient below tolerance at start", history)

    for it in range(1, config.max_iters + 1):
        d = -_two_loop(g, list(pairs)) if pairs else -g
        slope = float(g @ d)
        if not slope < 0:
            pairs.clear()
            d = -g
            slope = -gnorm * gnorm
        alpha0 = 1.0 if pairs else min(1.0, 1.0 / gnorm)

        def phi(a, x=x, d=d):
            xa = x + a * d
            fa, ga = objective(xa)
            ga = np.asarray(ga, dtype=np.float64)
            return float(fa), float(ga @ d), (xa, ga)

        try:
            alpha, f_new, (x_new, g_new) = _strong_wolfe(phi, f, slope, alpha0, config.c1, config.c2,
                                                         config.max_line_search)
        except LineSearchError as exc:
            return LbfgsResult(x, f, it - 1, False, gnorm, f"line search failed: {exc}", history)
        if f_new >= f:
            # value stuck at rounding level; further steps cannot make progress
            return LbfgsResult(x, f, it - 1, False, gnorm, "stalled: no decrease at machine precision", history)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        history.append(f)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol:
            return LbfgsResult(x, f, it, True, gnorm, "gradient below tolerance", history)
    return LbfgsResult(x, f, config.max_iters, False, gnorm, "iteration limit reached", history)
