"""Seeded synthetic vibration channels and sensor costs.

Each channel is built as

    x_s(t) = offset + separation * s + trend * t / (N - 1) + noise

for state index s and sample t, with Gaussian noise of standard deviation
1 / snr (snr = inf gives a noise-free channel). Every cost component is drawn
uniformly from the channel's cost range and rounded to cents. A fixed seed
gives byte-identical files.
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

import sensor_utils
from errors import SpecError

LOAD_STEP = 10


@dataclass(frozen=True)
class ChannelProfile:
    offset: float = 1.0
    trend: float = 0.0
    separation: float = 0.0
    snr: float = 1.0
    cost_range: tuple = (40.0, 120.0)


@dataclass(frozen=True)
class SynthSpec:
    channels: int = 40
    samples_per_state: int = 500
    seed: int = 42
    n_states: int = 2
    loads_per_sensor: int = 10
    good_fraction: float = 0.5
    # explicit per-channel profiles; None draws the default good/noisy mix
    profiles: tuple = field(default=None, compare=False)

    def validate(self):
        if self.channels < 1:
            raise SpecError(f"channel count must be positive, got {self.channels}")
        if self.samples_per_state < 2:
            raise SpecError(f"samples per state must be >= 2, got {self.samples_per_state}")
        if self.n_states < 2:
            raise SpecError(f"at least 2 states are required, got {self.n_states}")
        if self.loads_per_sensor < 1:
            raise SpecError(f"loads per sensor must be positive, got {self.loads_per_sensor}")
        if not 0 <= self.good_fraction <= 1:
            raise SpecError(f"good_fraction must be in [0, 1], got {self.good_fraction}")
        if self.profiles is not None:
            if len(self.profiles) != self.channels:
                raise SpecError(f"{len(self.profiles)} profiles for {self.channels} channels")
            for i, p in enumerate(self.profiles):
                low, high = p.cost_range
                if not p.snr > 0:
                    raise SpecError(f"channel {i}: snr must be positive, got {p.snr}")
                if low < 0 or high < low or high <= 0:
                    raise SpecError(f"channel {i}: invalid cost range {p.cost_range}")


def good_profile(rng):
    """High SNR, clear state separation, steady trend, cheap."""
    return ChannelProfile(
        offset=float(rng.uniform(4.0, 6.0)),
        trend=float(rng.uniform(0.5, 1.5)),
        separation=float(rng.uniform(4.0, 6.0)),
        snr=float(rng.uniform(150.0, 250.0)),
        cost_range=(40.0, 120.0),
    )


def noisy_profile(rng):
    """Low SNR, no state separation, negligible trend, expensive."""
    return ChannelProfile(
        offset=float(rng.uniform(0.5, 1.5)),
        trend=float(rng.uniform(0.0, 0.1)),
        separation=0.0,
        snr=float(rng.uniform(0.3, 0.6)),
        cost_range=(150.0, 250.0),
    )


def default_profiles(spec, rng):
    n_good = int(round(spec.channels * spec.good_fraction))
    return tuple(good_profile(rng) if i < n_good else noisy_profile(rng) for i in range(spec.channels))


def channel_key(index, loads_per_sensor):
    return (str(index // loads_per_sensor + 1), str((index % loads_per_sensor) * LOAD_STEP))


def generate(spec):
    """Build the dataset and cost table in memory.

    Returns:
        Tuple of (SignalDataset, list of CostProfile)
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    profiles = spec.profiles if spec.profiles is not None else default_profiles(spec, rng)

    n = spec.samples_per_state
    codes = list(range(1, spec.n_states + 1))
    ramp = np.arange(n) / (n - 1)
    channels = []
    for i, p in enumerate(profiles):
        sigma = 0.0 if math.isinf(p.snr) else 1.0 / p.snr
        per_state = {}
        for s, code in enumerate(codes):
            noise = rng.standard_normal(n) * sigma
            arr = p.offset + p.separation * s + p.trend * ramp + noise
            arr.setflags(write=False)
            per_state[code] = arr
        key = channel_key(i, spec.loads_per_sensor)
        channels.append(sensor_utils.ChannelSeries(sensor_id=key[0], load_pct=key[1], per_state_samples=per_state))

    costs = []
    for i, p in enumerate(profiles):
        low, high = p.cost_range
        parts = [round(float(rng.uniform(low, high)), 2) for _ in sensor_utils.COST_COMPONENTS]
        key = channel_key(i, spec.loads_per_sensor)
        costs.append(sensor_utils.CostProfile(key[0], key[1], *parts))

    dataset = sensor_utils.SignalDataset(
        channels=tuple(channels),
        states=sensor_utils.make_states(codes),
        samples_per_state=n,
    )
    logging.info(f"Generated {spec.channels} synthetic channel(s), {spec.n_states} states, "
                 f"{n} samples per state (seed {spec.seed})")
    return dataset, costs


def synth(spec, out_dir):
    """Write signals.csv and costs.csv into out_dir; returns both paths."""
    dataset, costs = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    signals_path = os.path.join(out_dir, "signals.csv")
    costs_path = os.path.join(out_dir, "costs.csv")
    sensor_utils.write_signals(dataset, signals_path)
    sensor_utils.write_costs(costs, costs_path)
    return signals_path, costs_path
