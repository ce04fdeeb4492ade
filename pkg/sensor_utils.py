"""Loading, validating and indexing multi-channel vibration data and sensor costs.

A channel is one (sensor_id, load_pct) pair; both parts are kept as text so
arbitrary tags survive a round trip. Samples for a channel are grouped per
state code and ordered by sample_index.

On-disk formats (UTF-8, '.' decimal separator):

  signals CSV  sensor_id,load_pct,state_code,sample_index,value
  costs CSV    sensor_id,load_pct,purchase,installation,replacement,
               disassembly,inspection[,communication]
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import ConflictError, DataError, JoinError, SchemaError, ShapeError, ConfigError

SIGNAL_COLUMNS = ("sensor_id", "load_pct", "state_code", "sample_index", "value")
COST_COMPONENTS = ("purchase", "installation", "replacement", "disassembly", "inspection")
COST_COLUMNS = ("sensor_id", "load_pct") + COST_COMPONENTS
OPTIONAL_COST_COLUMN = "communication"

# Healthy gearbox is the positive class for binary evaluation
DEFAULT_STATE_NAMES = {1: "healthy", 2: "broken_tooth"}
DEFAULT_POSITIVE_CODE = 1


def _natural(part):
    try:
        return (0, float(part), part)
    except ValueError:
        return (1, 0.0, part)


def channel_sort_key(key):
    """Order channel keys by sensor then load, numerically where possible."""
    sensor_id, load_pct = key
    return _natural(sensor_id) + _natural(load_pct)


def channel_label(key):
    sensor_id, load_pct = key
    return f"sensor {sensor_id} @ load {load_pct}"


@dataclass(frozen=True)
class StateLabel:
    name: str
    code: int
    positive: bool = False


@dataclass(frozen=True)
class ChannelSeries:
    sensor_id: str
    load_pct: str
    per_state_samples: dict = field(compare=False)

    @property
    def key(self):
        return (self.sensor_id, self.load_pct)

    @property
    def state_codes(self):
        return tuple(sorted(self.per_state_samples))

    def samples(self, code):
        return self.per_state_samples[code]

    def state_arrays(self):
        """Sample arrays in ascending state-code order."""
        return [self.per_state_samples[code] for code in self.state_codes]


@dataclass(frozen=True)
class SignalDataset:
    channels: tuple
    states: tuple
    samples_per_state: int

    def __post_init__(self):
        if not self.channels:
            raise ShapeError("Dataset has no channels")
        if len(self.states) < 2:
            raise ShapeError(f"At least 2 states are required, found {len(self.states)}")
        if self.samples_per_state < 2:
            raise ShapeError(f"At least 2 samples per state are required, found {self.samples_per_state}")
        codes = [s.code for s in self.states]
        if len(set(codes)) != len(codes):
            raise ConflictError(f"Duplicate state codes: {codes}")
        if sum(1 for s in self.states if s.positive) != 1:
            raise ConfigError("Exactly one state must be flagged as the positive class")

        seen = set()
        expected = tuple(sorted(codes))
        for channel in self.channels:
            if channel.key in seen:
                raise ConflictError(f"Duplicate channel {channel_label(channel.key)}")
            seen.add(channel.key)
            if channel.state_codes != expected:
                raise ShapeError(
                    f"{channel_label(channel.key)} has states {list(channel.state_codes)}, "
                    f"expected {list(expected)}"
                )
            for code in expected:
                arr = channel.samples(code)
                if len(arr) != self.samples_per_state:
                    raise ShapeError(
                        f"{channel_label(channel.key)} state {code} has {len(arr)} samples, "
                        f"expected {self.samples_per_state}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise DataError(f"{channel_label(channel.key)} state {code} has non-finite samples")

    @property
    def keys(self):
        return [c.key for c in self.channels]

    @property
    def state_codes(self):
        return tuple(sorted(s.code for s in self.states))

    @property
    def positive_code(self):
        return next(s.code for s in self.states if s.positive)

    def channel(self, key):
        for c in self.channels:
            if c.key == tuple(key):
                return c
        raise KeyError(key)


@dataclass(frozen=True)
class CostProfile:
    sensor_id: str
    load_pct: str
    purchase: float
    installation: float
    replacement: float
    disassembly: float
    inspection: float
    communication: float = 0.0

    @property
    def key(self):
        return (self.sensor_id, self.load_pct)

    @property
    def total(self):
        return (self.purchase + self.installation + self.replacement
                + self.disassembly + self.inspection + self.communication)


@dataclass(frozen=True)
class JoinedDataset:
    """A dataset whose every channel has exactly one cost profile."""
    dataset: SignalDataset
    costs: dict = field(compare=False)
    unused_cost_keys: tuple = ()

    @property
    def channels(self):
        return self.dataset.channels

    @property
    def keys(self):
        return self.dataset.keys

    @property
    def warning_count(self):
        return len(self.unused_cost_keys)

    def total_cost(self, key):
        return self.costs[tuple(key)].total


def make_states(codes, names=None, positive_code=DEFAULT_POSITIVE_CODE):
    names = names or DEFAULT_STATE_NAMES
    codes = sorted(set(int(c) for c in codes))
    if positive_code not in codes:
        raise ConfigError(f"Positive state code {positive_code} not present in data (codes {codes})")
    return tuple(
        StateLabel(name=names.get(code, f"state_{code}"), code=code, positive=(code == positive_code))
        for code in codes
    )


def _read_text_table(path, required, schema=None):
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if schema:
        frame = frame.rename(columns={actual: canonical for canonical, actual in schema.items()})
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    return frame


def _parse_float(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}: line {line}: column '{column}' is not a number: {text!r}")
    if not math.isfinite(value):
        raise DataError(f"{path}: line {line}: non-finite {column} {text!r}")
    return value


def _parse_int(text, path, line, column):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}: line {line}: column '{column}' is not an integer: {text!r}")


def load_signals(path, schema=None, state_names=None, positive_code=DEFAULT_POSITIVE_CODE):
    """Load a long-format signals CSV into a validated SignalDataset.

    Args:
        path: CSV file with the canonical header (or columns renamed via schema)
        schema: optional mapping canonical column name -> column name in the file
        state_names: optional mapping state code -> label name
        positive_code: state code treated as the positive ("healthy") class

    Returns:
        SignalDataset with channels in canonical order
    """
    frame = _read_text_table(path, SIGNAL_COLUMNS, schema)
    logging.info(f"Loading signals from {path} ({len(frame)} rows)")

    groups = {}
    for offset, (sensor_id, load_pct, state_text, index_text, value_text) in enumerate(
            zip(*(frame[c] for c in SIGNAL_COLUMNS))):
        line = offset + 2
        state_code = _parse_int(state_text, path, line, "state_code")
        sample_index = _parse_int(index_text, path, line, "sample_index")
        value = _parse_float(value_text, path, line, "value")
        key = (sensor_id.strip(), load_pct.strip())
        groups.setdefault(key, {}).setdefault(state_code, []).append((sample_index, line, value))

    if not groups:
        raise ShapeError(f"{path}: no data rows")

    channels = []
    lengths = set()
    codes = set()
    for key in sorted(groups, key=channel_sort_key):
        per_state = {}
        for code, rows in groups[key].items():
            rows.sort(key=lambda r: r[0])
            for prev, cur in zip(rows, rows[1:]):
                if prev[0] == cur[0]:
                    raise DataError(
                        f"{path}: line {cur[1]}: duplicate sample_index {cur[0]} "
                        f"for {channel_label(key)} state {code}"
                    )
            arr = np.array([r[2] for r in rows], dtype=float)
            arr.setflags(write=False)
            per_state[code] = arr
            lengths.add(len(arr))
            codes.add(code)
        channels.append(ChannelSeries(sensor_id=key[0], load_pct=key[1], per_state_samples=per_state))

    if len(lengths) != 1:
        raise ShapeError(f"{path}: ragged state lengths {sorted(lengths)}")

    dataset = SignalDataset(
        channels=tuple(channels),
        states=make_states(codes, state_names, positive_code),
        samples_per_state=lengths.pop(),
    )
    logging.info(
        f"Loaded {len(dataset.channels)} channels, {len(dataset.states)} states, "
        f"{dataset.samples_per_state} samples per state"
    )
    return dataset


def write_signals(dataset, path):
    """Write a dataset as canonical signals CSV (sorted, sample_index renumbered)."""
    if isinstance(dataset, JoinedDataset):
        dataset = dataset.dataset
    columns = {c: [] for c in SIGNAL_COLUMNS}
    for channel in sorted(dataset.channels, key=lambda c: channel_sort_key(c.key)):
        for code in channel.state_codes:
            arr = channel.samples(code)
            columns["sensor_id"].extend([channel.sensor_id] * len(arr))
            columns["load_pct"].extend([channel.load_pct] * len(arr))
            columns["state_code"].extend([str(code)] * len(arr))
            columns["sample_index"].extend(str(i) for i in range(len(arr)))
            columns["value"].extend(repr(float(v)) for v in arr)
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")
    logging.info(f"Wrote signals for {len(dataset.channels)} channels to {path}")
    return path


def load_costs(path):
    """Load the sensor cost table; one CostProfile per (sensor, load) row."""
    frame = _read_text_table(path, COST_COLUMNS)
    has_communication = OPTIONAL_COST_COLUMN in frame.columns
    logging.info(f"Loading costs from {path} ({len(frame)} rows)")

    profiles = []
    seen = {}
    for offset, row in enumerate(frame.to_dict("records")):
        line = offset + 2
        key = (row["sensor_id"].strip(), row["load_pct"].strip())
        values = {}
        for column in COST_COMPONENTS + ((OPTIONAL_COST_COLUMN,) if has_communication else ()):
            text = row[column].strip()
            if column == OPTIONAL_COST_COLUMN and text == "":
                values[column] = 0.0
                continue
            value = _parse_float(text, path, line, column)
            if value < 0:
                raise DataError(f"{path}: line {line}: negative {column} cost {value} for {channel_label(key)}")
            values[column] = value
        profile = CostProfile(sensor_id=key[0], load_pct=key[1], **values)
        if profile.total <= 0:
            raise DataError(f"{path}: line {line}: total cost must be > 0 for {channel_label(key)}")
        if key in seen:
            raise ConflictError(f"{path}: line {line}: duplicate cost row for {channel_label(key)} (first at line {seen[key]})")
        seen[key] = line
        profiles.append(profile)
    return profiles


def write_costs(costs, path):
    columns = list(COST_COLUMNS)
    if any(c.communication for c in costs):
        columns.append(OPTIONAL_COST_COLUMN)
    rows = []
    for c in sorted(costs, key=lambda c: channel_sort_key(c.key)):
        rows.append([c.sensor_id, c.load_pct] + [repr(float(getattr(c, col))) for col in columns[2:]])
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")
    logging.info(f"Wrote {len(rows)} cost rows to {path}")
    return path


def join(dataset, costs):
    """Attach exactly one cost profile to every channel.

    Extra cost rows are tolerated and counted; a channel without a cost row
    is an error. Re-joining an already joined dataset gives the same result.
    """
    if isinstance(dataset, JoinedDataset):
        dataset = dataset.dataset

    by_key = {}
    for profile in costs:
        if profile.key in by_key:
            raise ConflictError(f"Duplicate cost row for {channel_label(profile.key)}")
        by_key[profile.key] = profile

    missing = [k for k in dataset.keys if k not in by_key]
    if missing:
        raise JoinError("No cost row for: " + ", ".join(channel_label(k) for k in missing))

    channel_keys = set(dataset.keys)
    unused = tuple(sorted((k for k in by_key if k not in channel_keys), key=channel_sort_key))
    if unused:
        logging.warning(f"{len(unused)} cost row(s) match no channel: "
                        + ", ".join(channel_label(k) for k in unused))

    matched = {k: by_key[k] for k in dataset.keys}
    return JoinedDataset(dataset=dataset, costs=matched, unused_cost_keys=unused)
