"""Linearizing scale fields V and the variable-scale multiplier operator.

A LinearizerField holds the nonnegative scale choice V(x, y) on the grid,
together with the regularity class it was generated for.  The linearized
operator gathers, at each output point, the fixed-multiplier result for the
local scale V(x, y); a per-distinct-value bucketed path reproduces the
O(N^4) brute-force oracle exactly up to floating-point reassociation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    GridMismatchError,
    SampledField,
    _frozen_array,
    forward_transform,
    frequencies,
    write_hxf1,
)
from .multiplier import MultiplierProfile, _abs_power, hyperbolic_symbol, pi_beta_mask


@dataclass(frozen=True)
class Regularity:
    """Declared regularity class of a linearizer field.

    kind is one of 'constant', 'lip_x', 'lip_y', 'lip_2d',
    'dyadic_of_lipschitz', 'dyadic_metric_2d', 'dyadic_metric_x',
    'staircase_x', or 'none'.
    """

    kind: str
    lip: float | None = None
    floor: float | None = None


@dataclass(frozen=True)
class LinearizerField:
    n_log2: int
    values: np.ndarray
    regularity: Regularity = field(default_factory=lambda: Regularity("none"))
    seed: int | None = None

    def __post_init__(self) -> None:
        n = 1 << self.n_log2
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (n, n):
            raise ValueError(f"values shape {arr.shape} does not match N={n}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("linearizer values must be finite and >= 0")
        floor = self.regularity.floor
        if floor is not None and arr.min() < floor - 1e-12:
            raise ValueError(f"values fall below declared floor {floor}")
        if self.regularity.kind.startswith("dyadic") and not _all_dyadic(arr):
            raise ValueError("declared dyadic-valued field contains non powers of two")
        object.__setattr__(self, "values", _frozen_array(arr, np.float64))

    @property
    def n(self) -> int:
        return 1 << self.n_log2


def _all_dyadic(arr: np.ndarray) -> bool:
    pos = arr[arr > 0]
    if pos.size == 0:
        return True
    mant, _ = np.frexp(pos)
    return bool(np.all(mant == 0.5))


def _band_limited_noise(n_log2: int, rng: np.random.Generator, band: int = 3) -> np.ndarray:
    """Real trigonometric polynomial with unit-scale oscillation (periodic)."""
    n = 1 << n_log2
    x = np.arange(n) / n
    w = np.zeros((n, n))
    for _ in range(2 * band):
        kx = int(rng.integers(-band, band + 1))
        ky = int(rng.integers(-band, band + 1))
        if kx == 0 and ky == 0:
            continue
        amp = rng.standard_normal()
        phase = rng.uniform(0, 2 * np.pi)
        w += amp * np.cos(2 * np.pi * (kx * x[:, None] + ky * x[None, :]) + phase)
    if np.ptp(w) == 0.0:
        w = np.cos(2 * np.pi * x)[:, None] * np.ones((1, n))
    return w


def _adjacent_max_diff(values: np.ndarray, axis: int, wrap: bool = True) -> float:
    d = np.abs(np.diff(values, axis=axis))
    worst = float(d.max()) if d.size else 0.0
    if wrap:
        edge = np.abs(np.take(values, 0, axis=axis) - np.take(values, -1, axis=axis))
        worst = max(worst, float(edge.max()))
    return worst


def generate_linearizer(kind: str, params: dict, seed: int, n_log2: int) -> LinearizerField:
    """Deterministic pseudo-random field satisfying the declared regularity.

    Noise fields are band-limited trigonometric polynomials (hence periodic)
    rescaled so the measured grid constants hold with >= 5% margin.
    """
    rng = np.random.default_rng(seed)
    n = 1 << n_log2

    if kind == "constant":
        c = float(params["value"])
        if c < 0:
            raise ValueError("constant linearizer must be >= 0")
        return LinearizerField(n_log2, np.full((n, n), c), Regularity("constant"), seed)

    if kind in ("lip_x", "lip_y"):
        lip = float(params.get("lip_constant", 1.0))
        v_min = float(params.get("v_min", 0.5))
        if lip <= 0 or v_min < 0:
            raise ValueError("lip_constant must be > 0 and v_min >= 0")
        w = _band_limited_noise(n_log2, rng, band=int(params.get("band", 3)))
        axis = 0 if kind == "lip_x" else 1
        measured = _adjacent_max_diff(w, axis=axis) * n
        scale = 0.95 * lip / measured
        amplitude = params.get("amplitude")
        if amplitude is not None:
            span = np.ptp(w) * scale
            if span > 0:
                scale = min(scale, scale * float(amplitude) / span)
        v = v_min + scale * (w - w.min())
        return LinearizerField(n_log2, v, Regularity(kind, lip=lip, floor=v_min), seed)

    if kind == "lip_2d":
        lip = float(params.get("lip_constant", 1.0))
        floor = float(params.get("floor", lip * lip))
        if floor < lip * lip:
            raise ValueError(f"floor {floor} below lip_constant**2 = {lip * lip}")
        w = _band_limited_noise(n_log2, rng, band=int(params.get("band", 3)))
        measured = max(_adjacent_max_diff(w, axis=0), _adjacent_max_diff(w, axis=1)) * n
        # axis-step control implies euclidean control up to sqrt(2) via l1 paths
        scale = 0.95 * lip / (measured * math.sqrt(2.0))
        v = floor + scale * (w - w.min())
        return LinearizerField(n_log2, v, Regularity("lip_2d", lip=lip, floor=floor), seed)

    if kind == "dyadic_of_lipschitz":
        lip = float(params.get("lip_constant", 1.0))
        v_min = float(params.get("v_min", 0.5))
        if v_min <= 0:
            raise ValueError("dyadic_of_lipschitz needs v_min > 0")
        w = _band_limited_noise(n_log2, rng, band=int(params.get("band", 3)))
        measured = max(_adjacent_max_diff(w, axis=0), _adjacent_max_diff(w, axis=1)) * n
        scale = 0.95 * lip / (measured * math.sqrt(2.0))
        v = v_min + scale * (w - w.min())
        dyadic = np.exp2(np.floor(np.log2(v)))
        return LinearizerField(n_log2, dyadic, Regularity("dyadic_of_lipschitz", lip=lip), seed)

    if kind == "staircase_x":
        # Reflecting +-1 random walks quantized to steps of size lip/N: the
        # adjacent difference is exactly one step, so the Lipschitz constant
        # is met with margin while the number of distinct values stays small.
        lip = float(params.get("lip_constant", 1.0))
        v_min = float(params.get("v_min", 0.5))
        levels = int(params.get("levels", max(8, n // 2)))
        step = 0.9 * lip / n

        def walk(length: int) -> np.ndarray:
            pos = np.empty(length, dtype=np.int64)
            cur = int(rng.integers(0, levels))
            for i in range(length):
                pos[i] = cur
                move = int(rng.integers(-1, 2))
                cur = min(max(cur + move, 0), levels - 1)
            return pos

        v = v_min + step * (walk(n)[:, None] + walk(n)[None, :])
        return LinearizerField(n_log2, v, Regularity("staircase_x", lip=lip, floor=v_min), seed)

    raise ValueError(f"unknown linearizer kind {kind!r}")


@dataclass(frozen=True)
class LipschitzReport:
    passed: bool
    worst_ratio: float
    witness: tuple | None


def _torus_delta(n: int) -> np.ndarray:
    d = np.arange(n)
    return np.minimum(d, n - d) / n


def verify_lipschitz(V: LinearizerField, mode: Regularity, n_random_pairs: int = 10_000, seed: int = 0) -> LipschitzReport:
    """Check a declared regularity class on the grid.

    'lip_x' / 'lip_y' scan non-wrapping adjacent pairs along the axis (the
    path metric of the sampled segment; this makes exact linear fields pass
    with ratio 1).  'lip_2d' additionally draws random long-range pairs and
    applies the allowance max(lip**2, lip * torus distance).
    """
    v = V.values
    n = V.n
    if mode.kind in ("constant", "none"):
        return LipschitzReport(True, 0.0, None)

    if mode.kind in ("lip_x", "lip_y"):
        lip = mode.lip if mode.lip is not None else 1.0
        axis = 0 if mode.kind == "lip_x" else 1
        diffs = np.abs(np.diff(v, axis=axis))
        ratios = diffs / (lip / n)
        if ratios.size == 0:
            return LipschitzReport(True, 0.0, None)
        idx = np.unravel_index(np.argmax(ratios), ratios.shape)
        worst = float(ratios[idx])
        nxt = (idx[0] + 1, idx[1]) if axis == 0 else (idx[0], idx[1] + 1)
        return LipschitzReport(worst <= 1.0 + 1e-9, worst, (idx, nxt))

    if mode.kind == "lip_2d":
        lip = mode.lip if mode.lip is not None else 1.0
        allowance_floor = lip * lip
        worst = 0.0
        witness = None
        for axis in (0, 1):
            rolled = np.roll(v, -1, axis=axis)
            diffs = np.abs(rolled - v)
            allowed = max(allowance_floor, lip / n)
            ratios = diffs / allowed
            idx = np.unravel_index(np.argmax(ratios), ratios.shape)
            if float(ratios[idx]) > worst:
                worst = float(ratios[idx])
                nxt = ((idx[0] + 1) % n, idx[1]) if axis == 0 else (idx[0], (idx[1] + 1) % n)
                witness = (idx, nxt)
        rng = np.random.default_rng(seed)
        a = rng.integers(0, n, size=(n_random_pairs, 2))
        b = rng.integers(0, n, size=(n_random_pairs, 2))
        dx = _torus_delta(n)[(a[:, 0] - b[:, 0]) % n]
        dy = _torus_delta(n)[(a[:, 1] - b[:, 1]) % n]
        dist = np.hypot(dx, dy)
        dv = np.abs(v[a[:, 0], a[:, 1]] - v[b[:, 0], b[:, 1]])
        allowed = np.maximum(allowance_floor, lip * dist)
        ratios = dv / allowed
        k = int(np.argmax(ratios))
        if float(ratios[k]) > worst:
            worst = float(ratios[k])
            witness = (tuple(int(t) for t in a[k]), tuple(int(t) for t in b[k]))
        return LipschitzReport(worst <= 1.0 + 1e-9, worst, witness)

    if mode.kind == "dyadic_of_lipschitz":
        # necessary condition: V(z) < 2 V(z') + lip * dist for sampled pairs
        if not _all_dyadic(v):
            return LipschitzReport(False, math.inf, None)
        lip = mode.lip if mode.lip is not None else 1.0
        rng = np.random.default_rng(seed)
        a = rng.integers(0, n, size=(n_random_pairs, 2))
        b = rng.integers(0, n, size=(n_random_pairs, 2))
        dx = _torus_delta(n)[(a[:, 0] - b[:, 0]) % n]
        dy = _torus_delta(n)[(a[:, 1] - b[:, 1]) % n]
        dist = np.hypot(dx, dy)
        va = v[a[:, 0], a[:, 1]]
        vb = v[b[:, 0], b[:, 1]]
        ratios = np.maximum(va, vb) / (2.0 * np.minimum(va, vb) + lip * dist)
        k = int(np.argmax(ratios))
        worst = float(ratios[k])
        witness = (tuple(int(t) for t in a[k]), tuple(int(t) for t in b[k]))
        return LipschitzReport(worst <= 1.0 + 1e-9, worst, witness)

    raise ValueError(f"unsupported regularity kind {mode.kind!r}")


def dyadic_round_up(lam):
    """min{2**(j+2) : 2**j > lam}; brackets lam via result/8 <= lam < result/4."""
    arr = np.asarray(lam, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("dyadic_round_up requires positive finite input")
    _, exp = np.frexp(arr)  # lam = m * 2**exp with m in [0.5, 1), so 2**exp > lam
    out = np.ldexp(1.0, exp + 2)
    return float(out) if np.isscalar(lam) or arr.ndim == 0 else out


@dataclass(frozen=True)
class BucketDecomposition:
    """Partition of the grid by value buckets of a linearizer field."""

    distinct_values: np.ndarray  # sorted bucket labels; 0.0 marks the zero bucket
    masks: np.ndarray  # (B, N, N) boolean, pairwise disjoint, covering

    def __post_init__(self) -> None:
        object.__setattr__(self, "distinct_values", _frozen_array(self.distinct_values, np.float64))
        object.__setattr__(self, "masks", _frozen_array(self.masks, bool))


def level_sets(V: LinearizerField, mode: str = "dyadic") -> BucketDecomposition:
    """Bucket the grid by V: dyadic level sets 2**j <= V < 2**(j+1) (labelled
    by 2**j), or one bucket per distinct value ('exact').  Points with V = 0
    go to a reserved zero bucket in both modes."""
    v = V.values
    if mode == "exact":
        labels = np.unique(v)
    elif mode == "dyadic":
        pos = v > 0
        quantized = np.zeros_like(v)
        quantized[pos] = np.exp2(np.floor(np.log2(v[pos])))
        labels = np.unique(quantized)
        v = quantized
    else:
        raise ValueError(f"mode must be 'exact' or 'dyadic', got {mode!r}")
    masks = np.stack([v == lab for lab in labels])
    return BucketDecomposition(labels, masks)


def _masked_symbol_base(f: SampledField, beta: float, exponent_on: str = "eta"):
    spec = forward_transform(f)
    mask = pi_beta_mask(beta, f.n_log2, exponent_on=exponent_on)
    return spec.coeffs * mask.values


def apply_linearized_bruteforce(f: SampledField, V: LinearizerField, m: MultiplierProfile, beta: float) -> SampledField:
    """O(N^4) reference: per output point, sum the masked, m-weighted spectrum
    against the Fourier phases directly."""
    if f.n_log2 != V.n_log2:
        raise GridMismatchError("field and linearizer grids differ")
    n = f.n
    base = _masked_symbol_base(f, beta)
    freqs = frequencies(f.n_log2)
    abs_xi = np.abs(freqs).astype(np.float64)[:, None]
    eta_pow = _abs_power(freqs, beta)[None, :]
    hyper = abs_xi * eta_pow  # |xi| * |eta|**beta over the frequency grid
    pos = np.arange(n)
    ex = np.exp(2j * np.pi * np.outer(pos, freqs) / n)
    ey = ex  # same phase table for both axes
    out = np.empty((n, n), dtype=np.complex128)
    v = V.values
    for i in range(n):
        exi = ex[i]
        for j in range(n):
            weighted = m(v[i, j] * hyper) * base
            out[i, j] = exi @ weighted @ ey[j]
    return SampledField(f.n_log2, out)


def apply_linearized_bucketed(
    f: SampledField,
    V: LinearizerField,
    m: MultiplierProfile,
    beta: float,
    quantize: str = "exact",
) -> SampledField:
    """Fast path: one fixed-multiplier application per distinct V value,
    gathered on that value's mask.  quantize='dyadic' first replaces V by
    2**floor(log2 V) (an approximation, reported by the caller)."""
    if f.n_log2 != V.n_log2:
        raise GridMismatchError("field and linearizer grids differ")
    if quantize == "exact":
        v = V.values
    elif quantize == "dyadic":
        v = np.zeros_like(V.values)
        pos = V.values > 0
        v[pos] = np.exp2(np.floor(np.log2(V.values[pos])))
    else:
        raise ValueError(f"quantize must be 'exact' or 'dyadic', got {quantize!r}")
    labels = np.unique(v)
    base = _masked_symbol_base(f, beta)
    freqs = frequencies(f.n_log2)
    hyper = np.abs(freqs).astype(np.float64)[:, None] * _abs_power(freqs, beta)[None, :]
    n2 = f.n * f.n
    out = np.zeros((f.n, f.n), dtype=np.complex128)
    for lab in labels:
        mask = v == lab
        weighted = m(lab * hyper) * base  # lab = 0 gives the reserved m(0) bucket
        piece = np.fft.ifft2(weighted) * n2
        out[mask] = piece[mask]
    return SampledField(f.n_log2, out)


def maximal_over_scales(
    f: SampledField,
    m: MultiplierProfile,
    beta: float,
    t_min: float,
    t_max: float,
    refine: int = 1,
) -> SampledField:
    """Pointwise sup of |T_t f| over a geometric scale grid in [t_min, t_max].

    Scales step by factor 2 (refine=1) or 2**(1/refine); the discretized sup
    dominates every sampled member by construction.
    """
    if not (0 < t_min <= t_max):
        raise ValueError("need 0 < t_min <= t_max")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    spec = forward_transform(f)
    n2 = f.n * f.n
    out = np.zeros((f.n, f.n), dtype=np.float64)
    t = t_min
    factor = 2.0 ** (1.0 / refine)
    while t <= t_max * (1 + 1e-12):
        sym = hyperbolic_symbol(t, beta, m, f.n_log2)
        piece = np.fft.ifft2(spec.coeffs * sym.values) * n2
        out = np.maximum(out, np.abs(piece))
        t *= factor
    return SampledField(f.n_log2, out)


def kernel_majorant_mass(m: MultiplierProfile, lam: float, n_log2: int) -> float:
    """Mass of the dyadic-window majorant of the one-dimensional kernel of
    the multiplier xi -> m(lam |xi|).

    Writing k for the inverse transform of the symbol row and Phi for its
    radially non-increasing majorant on the torus, the returned constant C
    satisfies |k * g| <= C * M1 g pointwise for every g, where M1 is the
    centered dyadic-window maximal operator of :mod:`decomposition`.
    """
    n = 1 << n_log2
    freqs = frequencies(n_log2)
    sym = m(lam * np.abs(freqs).astype(np.float64))
    kernel = np.abs(np.fft.ifft(sym) * n)
    dist = np.minimum(np.arange(n), n - np.arange(n))  # torus distance in cells
    half_widths = [1 << q for q in range(n_log2)]
    # a_q = sup of |kernel| outside the previous window
    a = [float(kernel.max())]
    for h_prev in half_widths[:-1]:
        outside = kernel[dist > h_prev]
        a.append(float(outside.max()) if outside.size else 0.0)
    c = 0.0
    for q, h in enumerate(half_widths):
        b_q = a[q] - (a[q + 1] if q + 1 < len(a) else 0.0)
        c += b_q * min(2 * h + 1, n) / n
    return c


def domination_constant(m: MultiplierProfile, V: LinearizerField) -> float:
    """max over the distinct values of V of the kernel majorant mass."""
    labels = np.unique(V.values)
    return max(kernel_majorant_mass(m, max(lab, 1e-300), V.n_log2) for lab in labels)


def write_linearizer(path_prefix: str, V: LinearizerField, params: dict | None = None) -> None:
    """HXF1 payload (real values) plus a JSON sidecar describing the field."""
    write_hxf1(str(path_prefix) + ".hxf1", V.n_log2, V.values.astype(np.complex128))
    meta = {
        "kind": V.regularity.kind,
        "params": dict(params or {}),
        "seed": V.seed,
        "measured_constants": {
            "min": float(V.values.min()),
            "max": float(V.values.max()),
            "adjacent_x": float(_adjacent_max_diff(V.values, axis=0) * V.n),
            "adjacent_y": float(_adjacent_max_diff(V.values, axis=1) * V.n),
        },
    }
    with open(str(path_prefix) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
