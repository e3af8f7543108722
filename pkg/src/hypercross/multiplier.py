"""One-variable multiplier profiles and two-dimensional hyperbolic symbols.

Profiles are compactly supported, even, C^3-or-better functions of one real
variable.  Bump profiles squeeze between the indicators of (-eps, eps) and
(-2 eps, 2 eps) using a degree-11 smoothstep transition whose first five
derivatives vanish at the knots, so all smoothness-constant scans see a C^5
function.  The two-dimensional symbol of a profile at dilation lam is
m(lam * |xi| * |eta|**beta) (optionally with the exponent on the xi axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import _frozen_array, frequency_grids

# Degree-11 smoothstep: S(0)=0, S(1)=1, S', .., S^(5) vanish at both knots.
# Evaluated as x**6 * poly(x) on [0, 1/2] and by the symmetry S = 1 - S(1-x)
# above 1/2, so values never leave [0, 1] through roundoff.
_SMOOTHSTEP_POLY = (462.0, -1980.0, 3465.0, -3080.0, 1386.0, -252.0)


def _smoothstep_lower(x):
    """x**6 * poly(x); accurate and nonnegative on [0, 1/2]."""
    acc = np.zeros_like(x)
    for c in reversed(_SMOOTHSTEP_POLY):
        acc = acc * x + c
    return x**6 * acc


def smoothstep(u):
    """Monotone C^5 ramp from 0 at u<=0 to 1 at u>=1."""
    u = np.asarray(u, dtype=np.float64)
    x = np.clip(u, 0.0, 1.0)
    low = _smoothstep_lower(np.minimum(x, 0.5))
    high = 1.0 - _smoothstep_lower(np.minimum(1.0 - x, 0.5))
    return np.where(x <= 0.5, low, high)


def smoothstep_d2(u):
    """Second derivative of :func:`smoothstep` (zero outside (0, 1))."""
    u = np.asarray(u, dtype=np.float64)

    def d2_lower(x):
        acc = np.zeros_like(x)
        for k, c in reversed(list(enumerate(_SMOOTHSTEP_POLY))):
            p = k + 6
            acc = acc * x + c * p * (p - 1)
        return x**4 * acc

    x = np.clip(u, 0.0, 1.0)
    low = d2_lower(np.minimum(x, 0.5))
    high = -d2_lower(np.minimum(1.0 - x, 0.5))  # S'' is odd about 1/2
    out = np.where(x <= 0.5, low, high)
    return np.where((u <= 0.0) | (u >= 1.0), 0.0, out)


def smoothstep_antiderivative(u):
    """Integral of :func:`smoothstep` from 0 to u (u >= 0)."""
    u = np.asarray(u, dtype=np.float64)

    def anti_lower(x):
        acc = np.zeros_like(x)
        for k, c in reversed(list(enumerate(_SMOOTHSTEP_POLY))):
            p = k + 6
            acc = acc * x + c / (p + 1)
        return x**7 * acc

    x = np.clip(u, 0.0, 1.0)
    low = anti_lower(np.minimum(x, 0.5))
    # int_0^x S = x - 1/2 + int_0^{1-x} S for x >= 1/2
    high = x - 0.5 + anti_lower(np.minimum(1.0 - x, 0.5))
    inside = np.where(x <= 0.5, low, high)
    return np.where(u >= 1.0, u - 0.5, np.where(u <= 0.0, 0.0, inside))


def smooth_ramp(s):
    """C^6 version of max(s, 0): equals 0 for s <= -1 and s for s >= 1."""
    return 2.0 * smoothstep_antiderivative((np.asarray(s, dtype=np.float64) + 1.0) / 2.0)


def soft_knot_max(u, knot: float, half_width: float):
    """C^6 version of max(u, knot), exact outside (knot - w, knot + w)."""
    return knot + half_width * smooth_ramp((np.asarray(u, dtype=np.float64) - knot) / half_width)


@dataclass(frozen=True)
class MultiplierProfile:
    """Compactly supported even profile with vectorized evaluation.

    ``evaluate`` accepts scalars or numpy arrays; values vanish for
    ``|t| > support_radius``.  ``epsilon`` is set for bump profiles and for
    derived layers that remember their transition scale.
    """

    kind: str
    support_radius: float
    evaluate: Callable[[np.ndarray], np.ndarray]
    epsilon: float | None = None
    meta: tuple = ()

    def __call__(self, t):
        return self.evaluate(t)


def _is_dyadic_in_unit(eps: float) -> bool:
    if not (0.0 < eps <= 1.0) or not math.isfinite(eps):
        return False
    mantissa, _ = math.frexp(eps)
    return mantissa == 0.5


def make_bump_profile(eps: float) -> MultiplierProfile:
    """Even C^5 profile with 1 on [-eps, eps], 0 outside (-2 eps, 2 eps)."""
    if not _is_dyadic_in_unit(eps):
        raise ValueError(f"eps must be 2**-i for integer i >= 0, got {eps}")

    def evaluate(t, _eps=eps):
        a = np.abs(np.asarray(t, dtype=np.float64))
        return np.where(a <= _eps, 1.0, 1.0 - smoothstep((a - _eps) / _eps))

    return MultiplierProfile(kind="bump", support_radius=2.0 * eps, evaluate=evaluate, epsilon=eps)


def make_plateau_profile(flat_radius: float, support_radius: float) -> MultiplierProfile:
    """Even C^5 profile: 1 on [-flat_radius, flat_radius], 0 outside support."""
    if not (0.0 < flat_radius < support_radius):
        raise ValueError("need 0 < flat_radius < support_radius")
    width = support_radius - flat_radius

    def evaluate(t, _a=flat_radius, _w=width):
        a = np.abs(np.asarray(t, dtype=np.float64))
        return np.where(a <= _a, 1.0, 1.0 - smoothstep((a - _a) / _w))

    return MultiplierProfile(kind="plateau", support_radius=support_radius, evaluate=evaluate, epsilon=flat_radius)


def make_custom_profile(func: Callable, support_radius: float, epsilon: float | None = None) -> MultiplierProfile:
    def evaluate(t, _f=func):
        return np.asarray(_f(np.asarray(t, dtype=np.float64)), dtype=np.float64)

    return MultiplierProfile(kind="custom", support_radius=support_radius, evaluate=evaluate, epsilon=epsilon)


def smoothness_constant(m: MultiplierProfile, grid_points: int = 1 << 16) -> float:
    """sum_{i<=3} sup_t |t^i m^(i)(t)| with central finite differences.

    Derivatives use step h = 2**-16 * support_radius; the sup is taken over an
    equispaced scan of ``grid_points`` + 1 points on [-2R, 2R].
    """
    r = m.support_radius
    h = math.ldexp(r, -16)
    t = np.linspace(-2.0 * r, 2.0 * r, grid_points + 1)
    f0 = m(t)
    fp = m(t + h)
    fm = m(t - h)
    fpp = m(t + 2 * h)
    fmm = m(t - 2 * h)
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / (h * h)
    d3 = (fpp - 2 * fp + 2 * fm - fmm) / (2 * h**3)
    total = 0.0
    for i, d in enumerate((f0, d1, d2, d3)):
        vals = np.abs(t**i * d)
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile produced non-finite values during the derivative scan")
        total += float(vals.max())
    return total


def layer_decomposition(m: MultiplierProfile, depth: int) -> list[MultiplierProfile]:
    """Split m into layers m_i capped at the running values m(2**-i).

    The i-th partial sum equals a mollified min(m, m(2**-i)); the hard cap is
    replaced by a C^5 soft maximum of the argument over a window of total
    width 2**(-i-4) around the knot 2**-i, so each layer stays C^3-smooth and
    the layers still telescope exactly.  Knot and window are recorded in each
    layer's ``meta``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    scan = np.linspace(0.0, 2.0 * m.support_radius, 4097)
    vals = m(scan)
    if np.any(np.diff(vals) > 1e-9):
        worst = float(np.diff(vals).max())
        raise ValueError(f"profile is not non-increasing on [0, inf): max rise {worst:.3e}")

    def partial_sum(i: int):
        knot = math.ldexp(1.0, -i)
        w = math.ldexp(1.0, -i - 5)  # half-width; total window 2**(-i-4)

        def p(t, _knot=knot, _w=w, _m=m):
            a = np.abs(np.asarray(t, dtype=np.float64))
            return _m(soft_knot_max(a, _knot, _w))

        return p, knot, 2.0 * w

    layers: list[MultiplierProfile] = []
    prev: Callable | None = None
    for i in range(1, depth + 1):
        cur, knot, window = partial_sum(i)

        def layer_eval(t, _cur=cur, _prev=prev):
            hi = _cur(t)
            return hi if _prev is None else hi - _prev(t)

        layers.append(
            MultiplierProfile(
                kind="layer",
                support_radius=m.support_radius,
                evaluate=layer_eval,
                epsilon=math.ldexp(1.0, -i),
                meta=(("knot", knot), ("window", window)),
            )
        )
        prev = cur
    return layers


@dataclass(frozen=True)
class SymbolGrid:
    """Real multiplier values over the integer frequency grid (FFT order)."""

    n_log2: int
    values: np.ndarray

    def __post_init__(self) -> None:
        n = 1 << self.n_log2
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (n, n):
            raise ValueError(f"values shape {arr.shape} does not match N={n}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("symbol grid contains non-finite values")
        object.__setattr__(self, "values", _frozen_array(arr, np.float64))


def _abs_power(freq: np.ndarray, beta: float) -> np.ndarray:
    """|k|**beta on integer frequencies with the conventions |0|**beta = 0 for
    beta > 0, 1 for beta = 0, and a 0 placeholder for beta < 0 (those entries
    are always masked away by the caller)."""
    a = np.abs(freq).astype(np.float64)
    if beta == 0.0:
        return np.ones_like(a)
    if beta > 0.0:
        return a**beta
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = a[nz] ** beta
    return out


def hyperbolic_symbol(
    lam: float,
    beta: float,
    m: MultiplierProfile,
    n_log2: int,
    exponent_on: str = "eta",
) -> SymbolGrid:
    """Symbol m(lam * |xi| * |eta|**beta) on the frequency grid.

    ``exponent_on="xi"`` swaps the roles of the axes and yields
    m(lam * |xi|**beta * |eta|), the convention the scale-decomposition
    machinery uses.  For beta < 0 the line where the exponentiated frequency
    vanishes gets symbol value 0 (it always lies outside the matching
    truncation mask).
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lam must be positive and finite, got {lam}")
    xi, eta = frequency_grids(n_log2)
    if exponent_on == "eta":
        plain, powed = xi, eta
    elif exponent_on == "xi":
        plain, powed = eta, xi
    else:
        raise ValueError(f"exponent_on must be 'xi' or 'eta', got {exponent_on!r}")
    args = lam * np.abs(plain).astype(np.float64) * _abs_power(powed, beta)
    values = m(args)
    if beta < 0:
        values = np.where(powed == 0, 0.0, values)
    return SymbolGrid(n_log2, values)


def pi_beta_mask(beta: float, n_log2: int, exponent_on: str = "eta") -> SymbolGrid:
    """Indicator of {|eta|**beta <= 1} on the frequency grid.

    beta > 0 keeps |eta| <= 1 (the eta = 0 line included), beta < 0 keeps
    |eta| >= 1 (eta = 0 dropped), beta = 0 keeps everything.
    """
    xi, eta = frequency_grids(n_log2)
    freq = eta if exponent_on == "eta" else xi
    a = np.abs(freq)
    if beta == 0.0:
        keep = np.ones_like(a, dtype=bool)
    elif beta > 0.0:
        keep = a <= 1
    else:
        keep = a >= 1
    return SymbolGrid(n_log2, keep.astype(np.float64))


def write_symbol_hxf1(path, sym: SymbolGrid) -> None:
    """Export a symbol grid in the field binary format (real part only)."""
    from .grid import write_hxf1

    write_hxf1(path, sym.n_log2, sym.values.astype(np.complex128))


def flat_radius(m: MultiplierProfile, tol: float = 1e-9) -> float:
    """Largest r such that m >= 1 - tol on [0, r] (eps for bump profiles)."""
    if m.epsilon is not None:
        return float(m.epsilon)
    scan = np.linspace(0.0, m.support_radius, 8193)
    vals = m(scan)
    below = np.nonzero(vals < 1.0 - tol)[0]
    if below.size == 0:
        return float(m.support_radius)
    if below[0] == 0:
        raise ValueError("profile has no flat region around 0 (m(0) < 1)")
    return float(scan[below[0] - 1])
