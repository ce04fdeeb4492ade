import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

import dea_utils
from errors import AssemblyError, UsageError
from sensor_utils import channel_label, channel_sort_key

OUTPUT_FIELDS = ("monotonicity", "robustness", "trendability", "detectability", "rms")
INPUT_FIELDS = ("variance", "total_cost")
PEARSON = "pearson"


@dataclass(frozen=True)
class SelectionResult:
    model: str
    selected: tuple
    scores: dict = field(compare=False)
    threshold: float = None
    rejected: tuple = ()

    @property
    def count(self):
        return len(self.selected)


def assemble_dmus(metrics, costs):
    """Build one DMU per channel: 5 quality outputs, variance and cost as inputs.

    Args:
        metrics: {channel key: ChannelMetrics}
        costs: {channel key: total cost} (or a JoinedDataset)

    Returns:
        Tuple of (dmus, shifts) where shifts maps a field name to the amount
        added to its column to make it strictly positive.
    """
    if not metrics:
        logging.warning("No channel metrics to assemble")
        return [], {}
    total_cost = costs.total_cost if hasattr(costs, "total_cost") else costs.__getitem__

    keys = sorted(metrics, key=channel_sort_key)
    outputs, inputs = [], []
    for key in keys:
        m = metrics[key]
        row = []
        for name in OUTPUT_FIELDS:
            value = getattr(m, name, None)
            if value is None or not math.isfinite(value):
                raise AssemblyError(f"{channel_label(key)}: missing or invalid metric '{name}'")
            row.append(value)
        outputs.append(row)
        try:
            cost = float(total_cost(key))
        except KeyError:
            raise AssemblyError(f"{channel_label(key)}: missing metric 'total_cost'")
        if m.variance is None or not math.isfinite(m.variance):
            raise AssemblyError(f"{channel_label(key)}: missing or invalid metric 'variance'")
        inputs.append([m.variance, cost])

    Y, y_shift = dea_utils.positivity_shift(outputs)
    O, o_shift = dea_utils.positivity_shift(inputs)
    shifts = {}
    for name, delta in list(zip(OUTPUT_FIELDS, y_shift)) + list(zip(INPUT_FIELDS, o_shift)):
        if delta:
            shifts[name] = float(delta)
            logging.info(f"Shifted column '{name}' by {delta:.3g} to keep DEA data positive")
    dmus = [dea_utils.DmuRecord(id=key, outputs=Y[i], inputs=O[i]) for i, key in enumerate(keys)]
    return dmus, shifts


def _rank(scores):
    return sorted(scores, key=lambda k: (-scores[k], channel_sort_key(k)))


def select_by_efficiency(results, threshold=None, top_n=None, tolerance=dea_utils.DEFAULT_TOLERANCE):
    """Turn one model's efficiency results into a channel selection.

    Ratio models keep channels scoring >= threshold (default 1 - tolerance,
    i.e. the efficient set). For the additive model a threshold t in (0, 1]
    keeps scores >= -(1 - t) * |min score|, so t = 1 is the efficient set.
    """
    if not results:
        raise UsageError("No efficiency results to select from")
    models = {r.model for r in results}
    if len(models) != 1:
        raise UsageError(f"Selection needs results from a single model, got {sorted(models)}")
    model = models.pop()

    scored = {r.dmu_id: float(r.score) for r in results if r.ok}
    if model == "additive":
        if threshold is None:
            cut = -tolerance
        else:
            if not 0 < threshold <= 1:
                raise UsageError(f"Additive threshold must be in (0, 1], got {threshold}")
            worst = min(scored.values()) if scored else 0.0
            cut = -(1.0 - threshold) * abs(worst) - tolerance
    else:
        cut = 1.0 - tolerance if threshold is None else threshold

    ranked = _rank(scored)
    selected = [k for k in ranked if scored[k] >= cut]
    if top_n is not None:
        selected = selected[:int(top_n)]
    chosen = set(selected)
    rejected = [k for k in ranked if k not in chosen] + sorted(
        (r.dmu_id for r in results if not r.ok), key=channel_sort_key)
    logging.info(f"{dea_utils.MODEL_LABELS.get(model, model)}: selected {len(selected)} of {len(results)} channel(s)")
    return SelectionResult(model=model, selected=tuple(selected),
                           scores={r.dmu_id: float(r.score) for r in results},
                           threshold=cut if threshold is None else threshold, rejected=tuple(rejected))


def _pearson(x, y):
    sx, sy = np.std(x), np.std(y)
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def pearson_rank(dataset, top_n=None):
    """Rank channels by |Pearson r| between raw samples and state codes."""
    codes = dataset.state_codes
    labels = np.concatenate([np.full(dataset.samples_per_state, code, dtype=float) for code in codes])
    scores = {}
    for channel in dataset.channels:
        x = np.concatenate(channel.state_arrays())
        scores[channel.key] = abs(_pearson(x, labels))
    ranked = _rank(scores)
    selected = ranked if top_n is None else ranked[:int(top_n)]
    logging.info(f"Pearson baseline: kept {len(selected)} of {len(ranked)} channel(s)")
    return SelectionResult(model=PEARSON, selected=tuple(selected), scores=scores,
                           threshold=None, rejected=tuple(ranked[len(selected):]))


def write_selection(selection, path):
    def _entry(key):
        return {"sensor_id": key[0], "load_pct": key[1], "score": selection.scores.get(key)}

    payload = {
        "model": selection.model,
        "threshold": selection.threshold,
        "selected": [_entry(k) for k in selection.selected],
        "rejected": [_entry(k) for k in selection.rejected],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    logging.info(f"Wrote selection ({len(selection.selected)} channel(s)) to {path}")
    return path


def load_selection(path):
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    scores, selected, rejected = {}, [], []
    for bucket, target in (("selected", selected), ("rejected", rejected)):
        for entry in payload.get(bucket, []):
            key = (str(entry["sensor_id"]), str(entry["load_pct"]))
            target.append(key)
            scores[key] = entry.get("score")
    return SelectionResult(model=payload["model"], selected=tuple(selected), scores=scores,
                           threshold=payload.get("threshold"), rejected=tuple(rejected))
