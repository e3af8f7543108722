"""Operator-norm estimation: L2 power iteration, Lp ascent, parameter sweeps,
and a derivative-free adversarial search over scale-field families.

Estimates are certified lower bounds: every reported value is re-derivable as
lp_norm(T w, p) / lp_norm(w, p) from its stored witness w.  Convergence flags
are heuristic and never upgrade a bound to an exact norm.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import SampledField, apply_fixed_multiplier, frequencies, lp_norm
from .linearized import (
    LinearizerField,
    Regularity,
    apply_linearized_bucketed,
    generate_linearizer,
)
from .multiplier import (
    MultiplierProfile,
    SymbolGrid,
    _abs_power,
    make_bump_profile,
    pi_beta_mask,
    smoothness_constant,
)


@dataclass(frozen=True)
class LinearOperatorHandle:
    """A grid-linear operator with an explicit adjoint."""

    n_log2: int
    apply: callable
    adjoint: callable
    description: str = ""


def identity_operator(n_log2: int) -> LinearOperatorHandle:
    return LinearOperatorHandle(n_log2, lambda f: f, lambda f: f, "identity")


def fixed_multiplier_operator(symbol: SymbolGrid) -> LinearOperatorHandle:
    def apply(f: SampledField) -> SampledField:
        return apply_fixed_multiplier(f, symbol)

    # real symbols are self-adjoint in the weighted inner product
    return LinearOperatorHandle(symbol.n_log2, apply, apply, "fixed multiplier")


def linearized_operator(
    V: LinearizerField, m: MultiplierProfile, beta: float, quantize: str = "exact"
) -> LinearOperatorHandle:
    """The variable-scale operator via the bucketed path; the adjoint applies
    each bucket's (real) symbol to the mask-restricted input."""
    if quantize == "dyadic":
        vals = np.zeros_like(V.values)
        pos = V.values > 0
        vals[pos] = np.exp2(np.floor(np.log2(V.values[pos])))
        V = LinearizerField(V.n_log2, vals, Regularity("none"), V.seed)
    labels = np.unique(V.values)
    freqs = frequencies(V.n_log2)
    hyper = np.abs(freqs).astype(np.float64)[:, None] * _abs_power(freqs, beta)[None, :]
    mask_sym = pi_beta_mask(beta, V.n_log2).values

    def apply(f: SampledField) -> SampledField:
        return apply_linearized_bucketed(f, V, m, beta, quantize="exact")

    def adjoint(g: SampledField) -> SampledField:
        n2 = g.n * g.n
        acc = np.zeros((g.n, g.n), dtype=np.complex128)
        for lam in labels:
            sel = V.values == lam
            restricted = np.where(sel, g.samples, 0.0)
            spec = np.fft.fft2(restricted) / n2
            acc += np.fft.ifft2(spec * m(lam * hyper) * mask_sym) * n2
        return SampledField(g.n_log2, acc)

    return LinearOperatorHandle(V.n_log2, apply, adjoint, "linearized multiplier")


def dense_matrix(op: LinearOperatorHandle) -> np.ndarray:
    """Column-by-column materialization (basis fields); small grids only."""
    n = 1 << op.n_log2
    cols = np.empty((n * n, n * n), dtype=np.complex128)
    for idx in range(n * n):
        e = np.zeros((n, n), dtype=np.complex128)
        e[idx // n, idx % n] = 1.0
        cols[:, idx] = op.apply(SampledField(op.n_log2, e)).samples.ravel()
    return cols


def dense_operator_norm(op: LinearOperatorHandle) -> float:
    """Largest singular value of the materialized matrix (independent oracle)."""
    return float(np.linalg.svd(dense_matrix(op), compute_uv=False)[0])


@dataclass(frozen=True)
class NormEstimate:
    p: float
    value: float
    iterations: int
    witness: SampledField
    converged: bool


def _ratio(op: LinearOperatorHandle, w: SampledField, p: float) -> float:
    denom = lp_norm(w, p)
    if denom == 0.0:
        return 0.0
    return lp_norm(op.apply(w), p) / denom


def l2_norm_power_iteration(
    op: LinearOperatorHandle,
    tol: float = 1e-12,
    max_iter: int = 200,
    seed: int = 0,
) -> NormEstimate:
    """Power iteration on T* T from a random start; the reported value is the
    ratio at the final witness, hence a lower bound on the operator norm."""
    rng = np.random.default_rng(seed)
    n = 1 << op.n_log2
    v = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    w = SampledField(op.n_log2, v)
    prev = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        tw = op.apply(w)
        est = lp_norm(tw, 2.0) / lp_norm(w, 2.0)
        nxt = op.adjoint(tw)
        scale = lp_norm(nxt, 2.0)
        if scale == 0.0:
            return NormEstimate(2.0, 0.0, iterations, w, True)
        w = SampledField(op.n_log2, nxt.samples / scale)
        if abs(est - prev) <= tol * max(est, 1e-300):
            converged = True
            break
        prev = est
    value = _ratio(op, w, 2.0)
    return NormEstimate(2.0, value, iterations, w, converged)


def _dual_direction(h: np.ndarray, p: float, norm: float) -> np.ndarray:
    """Gradient of the weighted lp norm at h: sgn(h) (|h|/norm)**(p-1)."""
    if norm == 0.0:
        return np.zeros_like(h)
    return np.sign(h) * (np.abs(h) / norm) ** (p - 1.0)


def lp_norm_ascent(
    op: LinearOperatorHandle,
    p: float,
    restarts: int = 25,
    iters: int = 60,
    seed: int = 0,
) -> NormEstimate:
    """Maximize lp_norm(T f, p) / lp_norm(f, p) by normalized gradient ascent
    with backtracking line search, over real witness fields, keeping the best
    value across restarts (independent streams per restart)."""
    if not (np.isfinite(p) and p > 1.0):
        raise ValueError(f"p must be finite and > 1, got {p}")
    n = 1 << op.n_log2
    best_val = -math.inf
    best_w = None
    total_iters = 0
    any_converged = False
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        f = rng.standard_normal((n, n))
        f /= np.sqrt(np.mean(f**2))
        val = _ratio(op, SampledField(op.n_log2, f), p)
        step = 1.0
        converged = False
        for _ in range(iters):
            total_iters += 1
            g = op.apply(SampledField(op.n_log2, f)).samples.real
            norm_g = float(np.mean(np.abs(g) ** p) ** (1 / p))
            norm_f = float(np.mean(np.abs(f) ** p) ** (1 / p))
            if norm_g == 0.0 or norm_f == 0.0:
                break
            top = op.adjoint(SampledField(op.n_log2, _dual_direction(g, p, norm_g))).samples.real
            grad = (top - (norm_g / norm_f) * _dual_direction(f, p, norm_f)) / norm_f
            gnorm = float(np.sqrt(np.mean(grad**2)))
            if gnorm < 1e-14:
                converged = True
                break
            improved = False
            while step > 1e-8:
                cand = f + step * grad / gnorm
                cand /= np.sqrt(np.mean(cand**2))
                cand_val = _ratio(op, SampledField(op.n_log2, cand), p)
                if cand_val > val + 1e-14:
                    f, val = cand, cand_val
                    improved = True
                    step *= 1.5
                    break
                step *= 0.5
            if not improved:
                converged = True
                break
        if val > best_val:
            best_val = val
            best_w = SampledField(op.n_log2, f)
        any_converged = any_converged or converged
    value = _ratio(op, best_w, p)
    return NormEstimate(p, value, total_iters, best_w, any_converged)


@dataclass(frozen=True)
class SweepRow:
    p: float
    beta: float
    epsilon: float
    n: int
    seed: int
    smoothness: float
    estimate: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    fitted_c: float

    def log_shape_ratio(self) -> float:
        """max over rows of estimate/(log2(1/eps)+1) divided by the min."""
        q = [r.estimate / (math.log2(1.0 / r.epsilon) + 1.0) for r in self.rows]
        return max(q) / min(q)


def epsilon_sweep(
    p: float,
    beta: float,
    v_spec: dict,
    eps_list,
    n_log2: int,
    seed: int,
) -> SweepResult:
    """Norm estimates across bump widths, with the least constant c such that
    estimate <= c * A * (log2(1/eps) + 1) across the sweep."""
    rows = []
    fitted = 0.0
    v_kind = v_spec.get("kind", "staircase_x")
    v_params = {k: v for k, v in v_spec.items() if k != "kind"}
    V = generate_linearizer(v_kind, v_params, seed, n_log2)
    for eps in eps_list:
        m = make_bump_profile(eps)
        a_const = smoothness_constant(m)
        op = linearized_operator(V, m, beta)
        if p == 2.0:
            est = l2_norm_power_iteration(op, seed=seed)
        else:
            est = lp_norm_ascent(op, p, seed=seed)
        rows.append(
            SweepRow(p, beta, float(eps), 1 << n_log2, seed, a_const, est.value, est.iterations, est.converged)
        )
        bound = a_const * (math.log2(1.0 / eps) + 1.0)
        fitted = max(fitted, est.value / bound)
    return SweepResult(tuple(rows), fitted)


SWEEP_CSV_COLUMNS = ["p", "beta", "epsilon", "N", "seed", "A", "estimate", "iterations", "converged"]


def write_sweep_csv(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for r in result.rows:
            writer.writerow(
                [repr(r.p), repr(r.beta), repr(r.epsilon), r.n, r.seed, repr(r.smoothness), repr(r.estimate), r.iterations, r.converged]
            )


@dataclass(frozen=True)
class ResolutionStabilityReport:
    """Soft diagnostic: spread of norm estimates across grid resolutions.

    ``within_factor`` is reported, never asserted; the ascent is heuristic and
    occasional spread beyond the factor is logged rather than failed.
    """

    p: float
    estimates: tuple  # (n_log2, estimate) pairs
    spread: float
    within_factor: bool


def resolution_stability(
    p: float,
    v_spec: dict,
    n_log2_list,
    seed: int,
    factor: float = 2.0,
    epsilon: float = 0.5,
    restarts: int = 6,
) -> ResolutionStabilityReport:
    """Estimate the norm of the same operator family at several resolutions
    and report the max/min spread."""
    m = make_bump_profile(epsilon)
    v_kind = v_spec.get("kind", "staircase_x")
    v_params = {k: v for k, v in v_spec.items() if k != "kind"}
    estimates = []
    for n_log2 in n_log2_list:
        V = generate_linearizer(v_kind, v_params, seed, n_log2)
        op = linearized_operator(V, m, v_spec.get("beta", 1.0))
        if p == 2.0:
            est = l2_norm_power_iteration(op, seed=seed)
        else:
            est = lp_norm_ascent(op, p, restarts=restarts, iters=40, seed=seed)
        estimates.append((n_log2, est.value))
    values = [v for _, v in estimates]
    spread = max(values) / min(values) if min(values) > 0 else math.inf
    return ResolutionStabilityReport(p, tuple(estimates), spread, spread <= factor)


# ---------------------------------------------------------------------------
# Adversarial search over scale-field families.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchReport:
    best_value: float
    best_params: tuple
    best_field: LinearizerField
    measured_lipschitz: float
    evaluations: int
    constrained: bool
    history: tuple


def _stripe_field(boundaries: np.ndarray, exponents: np.ndarray, n_log2: int) -> LinearizerField:
    """Vertical stripes of power-of-two values with free boundaries."""
    n = 1 << n_log2
    x = np.arange(n) / n
    levels = np.zeros(n, dtype=np.int64)
    for b in np.sort(boundaries):
        levels += x >= b
    vals = np.exp2(exponents[np.clip(levels, 0, exponents.size - 1)])
    return LinearizerField(n_log2, np.repeat(vals[:, None], n, axis=1), Regularity("none"), None)


def _measured_lipschitz_x(V: LinearizerField) -> float:
    v = V.values
    n = V.n
    d = np.abs(np.diff(v, axis=0))
    wrap = np.abs(v[0] - v[-1])
    return float(max(d.max() if d.size else 0.0, wrap.max()) * n)


def adversarial_linearizer_search(
    p: float,
    beta: float,
    family_spec: dict,
    constraint: str,
    budget: int,
    seed: int,
    log_path=None,
    initial_params=None,
) -> SearchReport:
    """(1+1)-style evolutionary search maximizing the norm estimate over a
    parametric family of scale fields.

    Exploratory by design: the report carries the best-found value, field and
    measured Lipschitz constant, with no acceptance threshold attached.
    constraint='lipschitz' rejects candidates whose measured first-variable
    constant exceeds family_spec['lip_bound'].
    """
    if constraint not in ("lipschitz", "none"):
        raise ValueError(f"constraint must be 'lipschitz' or 'none', got {constraint!r}")
    n_log2 = int(family_spec.get("n_log2", 5))
    kind = family_spec.get("kind", "lacunary_stripes")
    eps = float(family_spec.get("epsilon", 1.0))
    m = make_bump_profile(eps)
    lip_bound = float(family_spec.get("lip_bound", 1.0))
    rng = np.random.default_rng(seed)
    events = []

    if kind == "constant":
        lo = float(family_spec.get("value_min", 2.0 ** (-n_log2)))
        hi = float(family_spec.get("value_max", 4.0))

        def propose(params):
            if params is None:
                return (float(rng.uniform(lo, hi)),)
            (c,) = params
            c = float(np.clip(c * 2.0 ** rng.normal(0, 0.5), lo, hi))
            return (c,)

        def realize(params):
            return generate_linearizer("constant", {"value": params[0]}, 0, n_log2)

    elif kind == "lacunary_stripes":
        n_stripes = int(family_spec.get("stripes", 6))
        exp_lo = int(family_spec.get("exp_min", -n_log2))
        exp_hi = int(family_spec.get("exp_max", 0))

        def propose(params):
            if params is None:
                bounds = np.sort(rng.uniform(0, 1, size=n_stripes - 1))
                exps = rng.integers(exp_lo, exp_hi + 1, size=n_stripes)
                return (tuple(bounds), tuple(int(e) for e in exps))
            bounds = np.array(params[0])
            exps = np.array(params[1])
            if rng.random() < 0.5 and bounds.size:
                i = rng.integers(bounds.size)
                bounds[i] = np.clip(bounds[i] + rng.normal(0, 0.05), 0.0, 1.0)
            else:
                i = rng.integers(exps.size)
                exps[i] = int(np.clip(exps[i] + rng.integers(-1, 2), exp_lo, exp_hi))
            return (tuple(np.sort(bounds)), tuple(int(e) for e in exps))

        def realize(params):
            return _stripe_field(np.array(params[0]), np.array(params[1], dtype=np.int64), n_log2)

    else:
        raise ValueError(f"unknown family kind {kind!r}")

    def objective(field: LinearizerField) -> float:
        op = linearized_operator(field, m, beta)
        if p == 2.0:
            return l2_norm_power_iteration(op, max_iter=60, seed=seed).value
        return lp_norm_ascent(op, p, restarts=4, iters=30, seed=seed).value

    best_params = None
    best_val = -math.inf
    best_field = None
    evals = 0
    cur_params = None
    pending = [initial_params] if initial_params is not None else []
    while evals < budget:
        cand = pending.pop(0) if pending else propose(cur_params)
        field = realize(cand)
        feasible = True
        measured = _measured_lipschitz_x(field)
        if constraint == "lipschitz" and measured > lip_bound:
            feasible = False
        if feasible:
            val = objective(field)
            evals += 1
            events.append((evals, val, measured))
            if val > best_val:
                best_val, best_params, best_field = val, cand, field
                cur_params = cand
        else:
            evals += 1
            events.append((evals, float("nan"), measured))
        if rng.random() < 0.15:
            cur_params = None  # occasional restart
    if log_path is not None:
        with open(log_path, "w") as fh:
            for ev in events:
                fh.write(json.dumps({"eval": ev[0], "value": ev[1], "lipschitz": ev[2]}) + "\n")
    return SearchReport(
        best_value=best_val,
        best_params=best_params,
        best_field=best_field,
        measured_lipschitz=_measured_lipschitz_x(best_field) if best_field is not None else float("nan"),
        evaluations=evals,
        constrained=constraint == "lipschitz",
        history=tuple(events),
    )
