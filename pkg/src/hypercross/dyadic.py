"""Dyadic models: Haar tensor expansions, the dyadic metric, and the
scale-selected model operator with its stability checks.

Dyadic intervals are 2**k ((0,1] + n), left-open right-closed; grid cell i is
identified with ((i)/N, (i+1)/N].  Haar functions are L2-normalized with the
left half positive.  Transforms resolve scales |I| >= 2**-depth and require
depth <= n_log2 - 1 so every Haar half-interval contains at least one cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import SampledField
from .linearized import LinearizerField, Regularity, _all_dyadic


class HypothesisViolationError(ValueError):
    """A model-operator hypothesis fails on the supplied inputs."""


@dataclass(frozen=True)
class DyadicInterval:
    """The interval 2**k ((0,1] + n) = (n 2**k, (n+1) 2**k]."""

    k: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("position n must be >= 0")

    @property
    def length(self) -> float:
        return math.ldexp(1.0, self.k)

    @property
    def left(self) -> float:
        return self.n * self.length

    @property
    def right(self) -> float:
        return (self.n + 1) * self.length

    def contains(self, x: float) -> bool:
        return self.left < x <= self.right


def haar_eval(I: DyadicInterval, x) -> np.ndarray:
    """L2-normalized Haar function: +|I|**-1/2 on the left half of I,
    -|I|**-1/2 on the right half, 0 outside."""
    x = np.asarray(x, dtype=np.float64)
    height = I.length ** -0.5
    mid = I.left + I.length / 2.0
    inside = (x > I.left) & (x <= I.right)
    return np.where(inside, np.where(x <= mid, height, -height), 0.0)


def _analysis_matrix(scale_exp: int, n_log2: int) -> np.ndarray:
    """Rows are h_I(cell)/N for all I with |I| = 2**-scale_exp."""
    n = 1 << n_log2
    count = 1 << scale_exp
    block = n >> scale_exp  # cells per interval
    if block < 2:
        raise ValueError(f"scale 2**-{scale_exp} unresolved on an N={n} grid")
    height = math.sqrt(float(count))  # |I|**-1/2
    mat = np.zeros((count, n))
    for p in range(count):
        mat[p, p * block : p * block + block // 2] = height / n
        mat[p, p * block + block // 2 : (p + 1) * block] = -height / n
    return mat


@dataclass(frozen=True)
class HaarCoefficients:
    """Tensor Haar coefficients plus the complementary mean data.

    ``coeffs[(a, b)]`` holds <h_I (x) h_J, f> for |I| = 2**-a, |J| = 2**-b;
    ``row_block``/``col_block``/``mean`` carry the h_I (x) 1, 1 (x) h_J and
    1 (x) 1 components needed to reconstruct f outside the pure Haar span.
    """

    n_log2: int
    depth: int
    coeffs: dict
    row_block: dict
    col_block: dict
    mean: complex

    def tensor_energy(self) -> float:
        return float(sum(np.sum(np.abs(c) ** 2) for c in self.coeffs.values()))


def haar_transform(f: SampledField, depth: int) -> HaarCoefficients:
    """Coefficients by exact summation over cells for |I|, |J| >= 2**-depth."""
    if depth < 0 or depth > f.n_log2 - 1:
        raise ValueError(f"depth {depth} exceeds grid resolution (max {f.n_log2 - 1})")
    mats = [_analysis_matrix(a, f.n_log2) for a in range(depth + 1)]
    samples = f.samples
    n = f.n
    coeffs = {}
    for a in range(depth + 1):
        left = mats[a] @ samples
        for b in range(depth + 1):
            coeffs[(a, b)] = left @ mats[b].T
    col_mean = samples.mean(axis=1)  # average over y
    row_mean = samples.mean(axis=0)
    row_block = {a: mats[a] @ col_mean for a in range(depth + 1)}
    col_block = {b: mats[b] @ row_mean for b in range(depth + 1)}
    return HaarCoefficients(f.n_log2, depth, coeffs, row_block, col_block, complex(samples.mean()))


def haar_inverse(h: HaarCoefficients) -> SampledField:
    """Synthesize the field resolved by the coefficients (round-trip identity
    when depth = n_log2 - 1)."""
    n = 1 << h.n_log2
    mats = {a: _analysis_matrix(a, h.n_log2) for a in range(h.depth + 1)}
    out = np.full((n, n), h.mean, dtype=np.complex128)
    for a, vec in h.row_block.items():
        out += ((n * mats[a]).T @ vec)[:, None]  # h_I(x) * 1(y)
    for b, vec in h.col_block.items():
        out += ((n * mats[b]).T @ vec)[None, :]  # 1(x) * h_J(y)
    for (a, b), c in h.coeffs.items():
        out += (n * mats[a]).T @ c @ (n * mats[b])
    return SampledField(h.n_log2, out)


def dyadic_metric(x: float, x2: float, floor_scale: float) -> float:
    """Length of the smallest dyadic interval containing both points of (0,1],
    floored at floor_scale (coincident points return the floor)."""
    for val in (x, x2):
        if not (0.0 < val <= 1.0):
            raise ValueError(f"point {val} outside (0, 1]")
    if floor_scale <= 0:
        raise ValueError("floor_scale must be positive")
    j_max = max(0, int(math.ceil(-math.log2(floor_scale))))
    for j in range(j_max, -1, -1):
        if math.ceil(x * (1 << j)) == math.ceil(x2 * (1 << j)):
            return max(math.ldexp(1.0, -j), floor_scale)
    return 1.0  # both points lie in (0, 1]


def dyadic_metric_cells(i, i2, n_log2: int):
    """Grid version: distance between cells i and i2 in units of [0,1]; the
    floor is one cell."""
    xor = np.bitwise_xor(np.asarray(i, dtype=np.int64), np.asarray(i2, dtype=np.int64))
    bitlen = np.zeros_like(xor)
    nz = xor > 0
    bitlen[nz] = np.frexp(xor[nz].astype(np.float64))[1]
    return np.ldexp(1.0, bitlen - n_log2)


def dyadic_metric_2d(p, q, floor_scale: float) -> float:
    """Side of the smallest dyadic square containing both points: the max of
    the coordinate metrics."""
    return max(
        dyadic_metric(p[0], q[0], floor_scale),
        dyadic_metric(p[1], q[1], floor_scale),
    )


def _size_product(a: int, b: int, beta: float, variant: str) -> float:
    """|I| |J|**beta for thm_4_2, plain |I| |J| for thm_4_1."""
    if variant == "thm_4_1":
        return math.ldexp(1.0, -a - b)
    return math.ldexp(1.0, -a) * 2.0 ** (-b * beta)


def dyadic_model_operator(
    f: SampledField,
    V: LinearizerField,
    beta: float,
    L: float,
    variant: str,
    depth: int | None = None,
    method: str = "fast",
) -> SampledField:
    """Scale-selected Haar sum: at each point, the tensor details whose scale
    pair is admissible for V(x, y) are kept.

    thm_4_1 keeps |I||J| <= V(x,y) and requires sqrt(V) > L everywhere;
    thm_4_2 keeps |I||J|**beta <= V(x,y) subject to |J|**beta >= L.
    """
    if variant not in ("thm_4_1", "thm_4_2"):
        raise ValueError(f"unknown variant {variant!r}")
    if f.n_log2 != V.n_log2:
        raise ValueError("field and linearizer grids differ")
    if not _all_dyadic(V.values) or np.any(V.values <= 0):
        raise HypothesisViolationError("V must take values in {2**k}")
    if variant == "thm_4_1" and not np.all(np.sqrt(V.values) > L):
        bad = int(np.sum(np.sqrt(V.values) <= L))
        raise HypothesisViolationError(f"sqrt(V) > L fails at {bad} grid points")
    depth = f.n_log2 - 1 if depth is None else depth
    h = haar_transform(f, depth)
    n = f.n
    v = V.values
    out = np.zeros((n, n), dtype=np.complex128)
    mats = {a: _analysis_matrix(a, f.n_log2) for a in range(depth + 1)}
    for (a, b), c in h.coeffs.items():
        if variant == "thm_4_2" and not (2.0 ** (-b * beta) >= L):
            continue
        admissible = _size_product(a, b, beta, variant) <= v
        if not admissible.any():
            continue
        if method == "fast":
            detail = (n * mats[a]).T @ c @ (n * mats[b])
            out += np.where(admissible, detail, 0.0)
        elif method == "direct":
            for p in range(c.shape[0]):
                hx = n * mats[a][p]
                for q in range(c.shape[1]):
                    if c[p, q] == 0:
                        continue
                    hy = n * mats[b][q]
                    out += np.where(admissible, c[p, q] * np.outer(hx, hy), 0.0)
        else:
            raise ValueError(f"method must be 'fast' or 'direct', got {method!r}")
    return SampledField(f.n_log2, out)


@dataclass(frozen=True)
class StabilityReport:
    variant: str
    depth: int
    violations: int
    witnesses: tuple = ()

    def record(self) -> dict:
        return {
            "variant": self.variant,
            "depth": self.depth,
            "violations": self.violations,
            "witnesses": [list(w) for w in self.witnesses[:8]],
        }


def check_selection_stability(
    V: LinearizerField,
    L: float,
    beta: float,
    variant: str,
    depth: int = 6,
    max_witnesses: int = 8,
) -> StabilityReport:
    """Exhaustively test that admissibility of a scale pair at (x, y) is
    inherited by every x' in the same I.

    For each scale pair (|I|, |J|) passing the variant's side condition and
    each (I, y), the admissibility mask must be constant in x over I; every
    non-constant block counts as one violation.
    """
    if variant not in ("thm_4_1", "thm_4_2"):
        raise ValueError(f"unknown variant {variant!r}")
    n_log2 = V.n_log2
    depth = min(depth, n_log2)
    n = V.n
    v = V.values
    violations = 0
    witnesses: list[tuple] = []
    for a in range(depth + 1):
        for b in range(depth + 1):
            if variant == "thm_4_1" and not (a >= b):  # |I| <= |J|
                continue
            if variant == "thm_4_2" and not (2.0 ** (-b * beta) >= L):
                continue
            admissible = _size_product(a, b, beta, variant) <= v
            block = n >> a  # cells per I
            grouped = admissible.reshape(1 << a, block, n)
            any_true = grouped.any(axis=1)
            all_true = grouped.all(axis=1)
            bad = any_true & ~all_true
            count = int(bad.sum())
            if count:
                violations += count
                for blk, y in zip(*np.nonzero(bad)):
                    if len(witnesses) >= max_witnesses:
                        break
                    col = grouped[blk, :, y]
                    x_true = int(blk) * block + int(np.argmax(col))
                    x_false = int(blk) * block + int(np.argmin(col))
                    witnesses.append((x_true, x_false, int(y), -a, -b))
    return StabilityReport(variant, depth, violations, tuple(witnesses))


def collection_J(I: DyadicInterval, y_cell: int, V: LinearizerField) -> list[DyadicInterval]:
    """Intervals J containing the cell of y with |J| >= |I| such that some
    grid x in I makes the pair (I, J) admissible for the plain product."""
    n_log2 = V.n_log2
    n = V.n
    a = -I.k
    if a < 0:
        raise ValueError("I must lie within (0, 1]")
    x_lo = I.n * (n >> a)
    x_hi = (I.n + 1) * (n >> a)
    vmax = float(V.values[x_lo:x_hi, y_cell].max())
    out = []
    for b in range(0, a + 1):  # |J| = 2**-b >= |I|
        if math.ldexp(1.0, -a - b) <= vmax:
            out.append(DyadicInterval(-b, y_cell >> (n_log2 - b)))
    return out


def telescoping_check(V: LinearizerField, depth: int = 6) -> bool:
    """True iff every collection_J(I, y) forms a contiguous range of scales."""
    n_log2 = V.n_log2
    n = V.n
    depth = min(depth, n_log2 - 1)
    for a in range(depth + 1):
        for pos in range(1 << a):
            I = DyadicInterval(-a, pos)
            for y in range(n):
                scales = sorted(-J.k for J in collection_J(I, y, V))
                if scales and scales != list(range(scales[0], scales[-1] + 1)):
                    return False
    return True


def _axis_block_average(values: np.ndarray, cells: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    if axis == 0:
        grouped = values.reshape(n // cells, cells, -1).mean(axis=1)
        return np.repeat(grouped, cells, axis=0)
    grouped = values.reshape(values.shape[0], n // cells, cells).mean(axis=2)
    return np.repeat(grouped, cells, axis=1)


def martingale_average(f: SampledField, scale: float, axis: int) -> SampledField:
    """Conditional expectation on dyadic intervals of the given length along
    one axis (axis 0 = x, axis 1 = y)."""
    cells = int(round(scale * f.n))
    if cells < 1 or cells & (cells - 1) or cells > f.n:
        raise ValueError(f"scale {scale} is not a resolvable dyadic length")
    return SampledField(f.n_log2, _axis_block_average(f.samples, cells, axis))


def dyadic_maximal_m2(f: SampledField) -> SampledField:
    """Dyadic maximal function in the second variable: max over dyadic
    intervals containing y (the cell itself included) of the average of |f|."""
    mags = np.abs(f.samples)
    out = mags.copy()
    for q in range(1, f.n_log2 + 1):
        out = np.maximum(out, _axis_block_average(mags, 1 << q, axis=1))
    return SampledField(f.n_log2, out)


def dyadic_square_function(f: SampledField, axis: int) -> SampledField:
    """(sum over scales of |martingale difference|**2)**1/2 along one axis."""
    diffs_sq = np.zeros(f.samples.shape, dtype=np.float64)
    finer = f.samples
    for q in range(1, f.n_log2 + 1):
        coarser = _axis_block_average(f.samples, 1 << q, axis)
        diffs_sq += np.abs(finer - coarser) ** 2
        finer = coarser
    return SampledField(f.n_log2, np.sqrt(diffs_sq))


# ---------------------------------------------------------------------------
# Hypothesis-class generators and their structural verifiers.
# ---------------------------------------------------------------------------

def generate_dyadic_metric_2d(L: float, n_log2: int, seed: int, split_prob: float = 0.7) -> LinearizerField:
    """Dyadic-valued V that is L-Lipschitz for the 2D dyadic metric with
    sqrt(V) > L: a random quadtree whose leaf values are powers of two in
    (L**2, 2 L * leaf_side]."""
    if L <= 0:
        raise ValueError("L must be positive")
    rng = np.random.default_rng(seed)
    n = 1 << n_log2
    v = np.empty((n, n))
    r_min = math.floor(math.log2(L * L)) + 1  # smallest power strictly above L**2

    def fill(x0: int, y0: int, cells: int, constrained: bool) -> None:
        side = cells / n
        can_split = side > L and cells >= 2
        if can_split and rng.random() < split_prob:
            half = cells // 2
            for dx in (0, half):
                for dy in (0, half):
                    fill(x0 + dx, y0 + dy, half, True)
            return
        r_max = math.floor(math.log2(2.0 * L * side)) if constrained else 0
        if r_min > r_max:
            raise ValueError(f"no admissible value for leaf of side {side} at L={L}")
        r = int(rng.integers(r_min, r_max + 1))
        v[x0 : x0 + cells, y0 : y0 + cells] = math.ldexp(1.0, r)

    fill(0, 0, n, False)
    return LinearizerField(n_log2, v, Regularity("dyadic_metric_2d", lip=L), seed)


def generate_dyadic_metric_x(L: float, n_log2: int, seed: int, split_prob: float = 0.7, y_band_log2: int = 2) -> LinearizerField:
    """Dyadic-valued V that is L-Lipschitz in the first variable for the
    dyadic metric, with a factor-2 margin: a random binary tree in x; each
    (x-leaf, y-band) takes a power of two at most L * leaf_length.

    The margin matters: a field saturating the Lipschitz bound exactly can
    defeat selection stability at scale pairs with |J|**beta = L, where the
    contradiction argument degenerates to equality.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    rng = np.random.default_rng(seed)
    n = 1 << n_log2
    bands = 1 << min(y_band_log2, n_log2)
    band_cells = n // bands
    v = np.empty((n, n))

    def fill(x0: int, cells: int, constrained: bool) -> None:
        if cells >= 2 and rng.random() < split_prob:
            fill(x0, cells // 2, True)
            fill(x0 + cells // 2, cells // 2, True)
            return
        r_hi = math.floor(math.log2(L * cells / n)) if constrained else 0
        for band in range(bands):
            r = int(rng.integers(r_hi - 3, r_hi + 1))
            v[x0 : x0 + cells, band * band_cells : (band + 1) * band_cells] = math.ldexp(1.0, r)

    fill(0, n, False)
    return LinearizerField(n_log2, v, Regularity("dyadic_metric_x", lip=L), seed)


def verify_dyadic_metric_2d(V: LinearizerField, L: float) -> int:
    """Count dyadic squares on which V is non-constant yet sup V > L * side
    (zero iff V is L-Lipschitz for the 2D dyadic metric)."""
    n = V.n
    v = V.values
    violations = 0
    for q in range(1, V.n_log2 + 1):
        cells = 1 << q
        blocks = v.reshape(n // cells, cells, n // cells, cells)
        bmax = blocks.max(axis=(1, 3))
        bmin = blocks.min(axis=(1, 3))
        nonconst = bmax > bmin
        side = cells / n
        violations += int(np.sum(nonconst & (bmax > L * side * (1 + 1e-12))))
    return violations


def verify_dyadic_metric_x(V: LinearizerField, L: float) -> int:
    """Count (dyadic x-interval, y) pairs with V non-constant in x yet
    sup V > L * length."""
    n = V.n
    v = V.values
    violations = 0
    for q in range(1, V.n_log2 + 1):
        cells = 1 << q
        blocks = v.reshape(n // cells, cells, n)
        bmax = blocks.max(axis=1)
        bmin = blocks.min(axis=1)
        nonconst = bmax > bmin
        length = cells / n
        violations += int(np.sum(nonconst & (bmax > L * length * (1 + 1e-12))))
    return violations
