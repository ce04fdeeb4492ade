"""Data envelopment analysis scoring of sensor channels.

Each decision-making unit (DMU) is one channel with output vector y (quality
metrics, higher is better) and input vector o (variance and cost, lower is
better). The four multiplier-form models are linearized with the
Charnes-Cooper normalization and handed to lp_utils.solve:

  ccr       max u.y_l            s.t. v.o_l = 1,        u.y_j - v.o_j <= 0
  iobcc     max u.y_l + u0       s.t. v.o_l = 1,        u.y_j + u0 - v.o_j <= 0
  oobcc     max u.y_l            s.t. v.o_l + v0 = 1,   u.y_j - v.o_j - v0 <= 0
  additive  max u.y_l - v.o_l - w0  s.t. u.y_j - v.o_j - w0 <= 0, u, v >= 1

Ratio models keep u, v >= eps; the free terms u0, v0, w0 are unrestricted.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import lp_utils
from errors import DataError, InternalError, ModelError, SchemaError, SensorSelectionError, UsageError

MODEL_KINDS = ("ccr", "iobcc", "oobcc", "additive")
MODEL_LABELS = {"ccr": "CCR", "iobcc": "IO-BCC", "oobcc": "OO-BCC", "additive": "Additive"}
RATIO_MODELS = ("ccr", "iobcc", "oobcc")

DEFAULT_EPS = 1e-6
DEFAULT_TOLERANCE = 1e-6
SHIFT_FLOOR = 1e-9
SHIFT_FRACTION = 1e-6


@dataclass(frozen=True)
class DmuRecord:
    id: tuple
    outputs: np.ndarray = field(compare=False)
    inputs: np.ndarray = field(compare=False)

    def __post_init__(self):
        y = np.asarray(self.outputs, dtype=float).ravel()
        o = np.asarray(self.inputs, dtype=float).ravel()
        if y.size < 1 or o.size < 1:
            raise DataError(f"DMU {self.id}: needs at least one output and one input")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(o))):
            raise DataError(f"DMU {self.id}: non-finite data")
        if np.any(y <= 0) or np.any(o <= 0):
            raise DataError(f"DMU {self.id}: outputs and inputs must be strictly positive")
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "inputs", o)


@dataclass(frozen=True)
class WeightVector:
    u: tuple
    v: tuple
    free: float = None


@dataclass(frozen=True)
class EfficiencyResult:
    dmu_id: tuple
    model: str
    score: float
    weights: WeightVector = None
    efficient: bool = False
    status: str = lp_utils.OPTIMAL

    @property
    def ok(self):
        return self.status == lp_utils.OPTIMAL


@dataclass(frozen=True)
class DeaOptions:
    eps: float = DEFAULT_EPS
    tolerance: float = DEFAULT_TOLERANCE
    normalize_additive: bool = True
    max_workers: int = 1
    lp_tolerances: lp_utils.LpTolerances = field(default_factory=lp_utils.LpTolerances)
    verbose: bool = False


def positivity_shift(matrix, floor=SHIFT_FLOOR, fraction=SHIFT_FRACTION):
    """Shift columns holding values below floor so every entry is positive.

    Returns:
        Tuple of (shifted matrix, per-column shift amounts; 0 where unshifted)
    """
    data = np.array(matrix, dtype=float)
    if data.size == 0:
        return data, np.zeros(data.shape[1] if data.ndim == 2 else 0)
    shifts = np.zeros(data.shape[1])
    for col in range(data.shape[1]):
        column = data[:, col]
        if np.any(column < floor):
            top = float(column.max())
            delta = fraction * top if top > 0 else fraction
            shifts[col] = delta - min(float(column.min()), 0.0)
            data[:, col] = column + shifts[col]
    return data, shifts


def _matrices(dmus):
    Y = np.vstack([d.outputs for d in dmus])
    O = np.vstack([d.inputs for d in dmus])
    return Y, O


def _check_table(dmus):
    if not dmus:
        raise UsageError("No DMUs to score")
    shapes = {(len(d.outputs), len(d.inputs)) for d in dmus}
    if len(shapes) != 1:
        raise UsageError(f"DMUs have inconsistent output/input counts: {sorted(shapes)}")


def _solve(program, options):
    return lp_utils.solve(program, options.lp_tolerances, verbose=options.verbose)


def _ratio_model(dmus, l, eps, free_term, kind, options):
    """Shared Charnes-Cooper program for ccr / iobcc / oobcc."""
    _check_table(dmus)
    Y, O = _matrices(dmus)
    n, R = Y.shape
    S = O.shape[1]
    extra = 0 if free_term is None else 1

    objective = np.concatenate([Y[l], np.zeros(S), np.ones(extra) if free_term == "numerator" else np.zeros(extra)])
    norm_row = np.concatenate([np.zeros(R), O[l], np.ones(extra) if free_term == "denominator" else np.zeros(extra)])
    rows = np.hstack([Y, -O])
    if free_term == "numerator":
        rows = np.hstack([rows, np.ones((n, 1))])
    elif free_term == "denominator":
        rows = np.hstack([rows, -np.ones((n, 1))])
    A = np.vstack([norm_row, rows])
    relations = ("=",) + ("<=",) * n
    b = np.concatenate([[1.0], np.zeros(n)])

    attempt_eps = eps
    for attempt in range(2):
        lower = np.concatenate([np.full(R + S, attempt_eps), np.full(extra, -np.inf)])
        program = lp_utils.LinearProgram(c=objective, A=A, relations=relations, b=b, sense="max", lower=lower)
        solution = _solve(program, options)
        if solution.optimal:
            break
        logging.debug(f"{MODEL_LABELS[kind]} DMU {dmus[l].id}: {solution.status} with eps={attempt_eps:g}")
        if solution.status != lp_utils.INFEASIBLE or attempt_eps == 0:
            break
        attempt_eps = attempt_eps / 100.0
    if not solution.optimal:
        raise ModelError(f"{MODEL_LABELS[kind]} LP for DMU {dmus[l].id} is {solution.status}", dmu_id=dmus[l].id)

    x = solution.x
    weights = WeightVector(
        u=tuple(float(w) for w in x[:R]),
        v=tuple(float(w) for w in x[R:R + S]),
        free=float(x[R + S]) if extra else None,
    )
    score = solution.objective
    return EfficiencyResult(dmu_id=dmus[l].id, model=kind, score=score, weights=weights,
                            efficient=score >= 1.0 - options.tolerance)


def ccr(dmus, l, eps=DEFAULT_EPS, options=None):
    """Constant-returns-to-scale efficiency of DMU l."""
    return _ratio_model(dmus, l, eps, None, "ccr", options or DeaOptions(eps=eps))


def bcc_input(dmus, l, eps=DEFAULT_EPS, options=None):
    """Input-oriented variable-returns efficiency: free u0 in the numerator."""
    return _ratio_model(dmus, l, eps, "numerator", "iobcc", options or DeaOptions(eps=eps))


def bcc_output(dmus, l, eps=DEFAULT_EPS, options=None):
    """Output-oriented variable-returns efficiency: free v0 in the denominator."""
    return _ratio_model(dmus, l, eps, "denominator", "oobcc", options or DeaOptions(eps=eps))


def additive(dmus, l, options=None):
    """Additive model; the optimum is <= 0 and equals 0 exactly for efficient DMUs."""
    options = options or DeaOptions()
    _check_table(dmus)
    Y, O = _matrices(dmus)
    n, R = Y.shape
    S = O.shape[1]

    objective = np.concatenate([Y[l], -O[l], [-1.0]])
    A = np.hstack([Y, -O, -np.ones((n, 1))])
    lower = np.concatenate([np.ones(R + S), [-np.inf]])
    program = lp_utils.LinearProgram(c=objective, A=A, relations=("<=",) * n, b=np.zeros(n),
                                     sense="max", lower=lower)
    solution = _solve(program, options)
    if solution.status == lp_utils.UNBOUNDED:
        raise InternalError(f"Additive LP for DMU {dmus[l].id} is unbounded")
    if not solution.optimal:
        raise ModelError(f"Additive LP for DMU {dmus[l].id} is {solution.status}", dmu_id=dmus[l].id)

    x = solution.x
    weights = WeightVector(u=tuple(float(w) for w in x[:R]), v=tuple(float(w) for w in x[R:R + S]),
                           free=float(x[R + S]))
    score = solution.objective
    return EfficiencyResult(dmu_id=dmus[l].id, model="additive", score=score, weights=weights,
                            efficient=score >= -options.tolerance)


def normalize_columns(dmus):
    """Divide every output and input column by its maximum."""
    Y, O = _matrices(dmus)
    Y = Y / Y.max(axis=0)
    O = O / O.max(axis=0)
    return [DmuRecord(id=d.id, outputs=Y[i], inputs=O[i]) for i, d in enumerate(dmus)]


def score_dmu(dmus, l, model, options):
    if model == "ccr":
        return ccr(dmus, l, options.eps, options)
    if model == "iobcc":
        return bcc_input(dmus, l, options.eps, options)
    if model == "oobcc":
        return bcc_output(dmus, l, options.eps, options)
    if model == "additive":
        return additive(dmus, l, options)
    raise UsageError(f"Unknown DEA model {model!r}, expected one of {MODEL_KINDS}")


def score_all(dmus, model, options=None):
    """Score every DMU under one model.

    A DMU whose LP fails gets a result with status 'error' and a NaN score;
    the other DMUs are still scored.
    """
    options = options or DeaOptions()
    if model not in MODEL_KINDS:
        raise UsageError(f"Unknown DEA model {model!r}, expected one of {MODEL_KINDS}")
    _check_table(dmus)
    table = normalize_columns(dmus) if model == "additive" and options.normalize_additive else list(dmus)

    def _one(l):
        try:
            return score_dmu(table, l, model, options)
        except SensorSelectionError as e:
            logging.error(f"{MODEL_LABELS[model]} scoring failed for DMU {table[l].id}: {e}")
            return EfficiencyResult(dmu_id=table[l].id, model=model, score=float("nan"),
                                    efficient=False, status=f"error: {e}")

    with ThreadPoolExecutor(max_workers=max(1, options.max_workers)) as executor:
        results = list(executor.map(_one, range(len(table))))

    efficient = sum(1 for r in results if r.efficient)
    failed = sum(1 for r in results if not r.ok)
    logging.info(f"{MODEL_LABELS[model]}: {efficient}/{len(results)} efficient DMU(s)"
                 + (f", {failed} failed" if failed else ""))
    return results


def efficiency_columns(n_outputs, n_inputs):
    return (["sensor_id", "load_pct", "model", "score", "efficient"]
            + [f"u_{i}" for i in range(1, n_outputs + 1)]
            + [f"v_{i}" for i in range(1, n_inputs + 1)]
            + ["free_term", "status"])


def write_efficiency_report(results, path, n_outputs, n_inputs):
    columns = efficiency_columns(n_outputs, n_inputs)
    rows = []
    for r in results:
        sensor_id, load_pct = r.dmu_id
        if r.weights is not None:
            weights = list(r.weights.u) + list(r.weights.v)
            free = "" if r.weights.free is None else repr(r.weights.free)
        else:
            weights = [float("nan")] * (n_outputs + n_inputs)
            free = ""
        rows.append([sensor_id, load_pct, r.model, repr(float(r.score)), str(bool(r.efficient)).lower()]
                    + [repr(float(w)) for w in weights] + [free, r.status])
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")
    logging.info(f"Wrote {len(rows)} efficiency row(s) to {path}")
    return path


def load_efficiency_report(path):
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    for column in ("sensor_id", "load_pct", "model", "score", "efficient", "status"):
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column {column!r}")
    u_cols = sorted((c for c in frame.columns if c.startswith("u_")), key=lambda c: int(c[2:]))
    v_cols = sorted((c for c in frame.columns if c.startswith("v_")), key=lambda c: int(c[2:]))
    results = []
    for row in frame.to_dict("records"):
        free = float(row["free_term"]) if row.get("free_term") else None
        weights = WeightVector(u=tuple(float(row[c]) for c in u_cols),
                               v=tuple(float(row[c]) for c in v_cols), free=free)
        score = float(row["score"])
        results.append(EfficiencyResult(
            dmu_id=(row["sensor_id"], row["load_pct"]), model=row["model"],
            score=score, weights=None if math.isnan(score) else weights,
            efficient=row["efficient"] == "true", status=row["status"]))
    return results
