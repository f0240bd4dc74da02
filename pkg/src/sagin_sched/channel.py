"""Rician mmWave channel, link budget, SINR, Shannon rate and slot demand.

All quantities are linear SI units (W, Hz, m). Functions accept scalars or
numpy arrays where that makes sense so the engine can evaluate whole runs at
once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterError

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0

# Sentinel slot demand for a flow a link cannot carry at all.
UNSCHEDULABLE = math.inf


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)[()]


def dbm_to_watts(dbm):
    return db_to_linear(np.asarray(dbm, dtype=float) - 30.0)


def watts_to_dbm(w):
    return (10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0)[()]


def free_space_reference_gain(wavelength: float) -> float:
    """Path gain at 1 m under free-space propagation, (lambda / 4 pi)^2."""
    return (wavelength / (4.0 * math.pi)) ** 2


def atmospheric_factor(path_m, db_per_km: float):
    """Linear attenuation for ``path_m`` metres of atmosphere."""
    return 10.0 ** (-db_per_km * np.asarray(path_m, dtype=float) / 1e3 / 10.0)[()]


def atmospheric_path(distance, h_high, h_low, ceiling: float):
    """Portion of a straight slant path that lies below ``ceiling`` metres.

    Uses the flat-layer approximation: the in-atmosphere share of the path is
    proportional to the share of the height difference below the ceiling.
    """
    distance = np.asarray(distance, dtype=float)
    h_high = np.asarray(h_high, dtype=float)
    h_low = np.asarray(h_low, dtype=float)
    dh = h_high - h_low
    inside = np.clip(ceiling - h_low, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dh > 0, np.clip(inside / np.where(dh > 0, dh, 1.0), 0.0, 1.0),
                        np.where(h_low < ceiling, 1.0, 0.0))
    return (distance * frac)[()]


@dataclass(frozen=True)
class ChannelParams:
    rician_k: float
    sigma: float
    gamma: float
    wavelength: float
    atmo_zeta: float
    noise_density: float
    bandwidth: float
    efficiency: float

    def __post_init__(self):
        if self.rician_k < 0:
            raise ParameterError("Rician K must be non-negative")
        if self.gamma <= 0:
            raise ParameterError("path-loss exponent must be positive")
        if not 0 < self.efficiency < 1:
            raise ParameterError("transceiver efficiency must lie in (0, 1)")
        if self.bandwidth <= 0:
            raise ParameterError("bandwidth must be positive")

    @property
    def noise_power(self) -> float:
        return self.noise_density * self.bandwidth


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float
    tx_gain: float
    rx_gain: float

    def __post_init__(self):
        if min(self.tx_power, self.tx_gain, self.rx_gain) <= 0:
            raise ParameterError("link budget terms must be positive")

    @property
    def eirp_gain(self) -> float:
        return self.tx_power * self.tx_gain * self.rx_gain


@dataclass(frozen=True)
class ChannelSample:
    gain: complex
    distance: float
    frame: int = 0
    slot: int = 0

    @property
    def power(self) -> float:
        return abs(self.gain) ** 2


def mean_path_gain(distance, params: ChannelParams):
    return params.sigma * np.asarray(distance, dtype=float) ** (-params.gamma)


def los_gain(distance, params: ChannelParams):
    """Deterministic LoS amplitude with free-space phase rotation."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ParameterError("distance must be positive")
    return (np.sqrt(mean_path_gain(d, params)) * np.exp(-2j * np.pi * d / params.wavelength))[()]


def complex_normal(rng: np.random.Generator, size=None):
    """Circularly-symmetric CN(0, 1) draws."""
    z = rng.standard_normal(size=(2,) if size is None else (*np.atleast_1d(size), 2))
    out = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    return complex(out) if size is None else out


def rician_gain(distance, rician_k, params: ChannelParams, nlos):
    """Combine LoS and a pre-drawn NLoS term into the Rician amplitude.

    ``rician_k`` may be an array (per-link K) and may be ``inf``.
    """
    k = np.asarray(rician_k, dtype=float)
    h_los = los_gain(distance, params)
    finite = np.isfinite(k)
    k_safe = np.where(finite, k, 0.0)
    los_w = np.where(finite, np.sqrt(k_safe / (1.0 + k_safe)), 1.0)
    nlos_w = np.where(finite, np.sqrt(mean_path_gain(distance, params) / (1.0 + k_safe)), 0.0)
    return (los_w * h_los + nlos_w * np.asarray(nlos))[()]


def sample_channel(distance: float, params: ChannelParams, rng: np.random.Generator,
                   frame: int = 0, slot: int = 0) -> ChannelSample:
    if distance <= 0:
        raise ParameterError("distance must be positive")
    h = rician_gain(distance, params.rician_k, params, complex_normal(rng))
    return ChannelSample(complex(h), float(distance), frame, slot)


def received_power(budget: LinkBudget, sample: ChannelSample, params: ChannelParams) -> float:
    return budget.tx_power * budget.tx_gain * budget.rx_gain * sample.power * params.atmo_zeta


def sinr(signal, interference, params: ChannelParams):
    if np.any(np.asarray(interference) < 0):
        raise ParameterError("interference power must be non-negative")
    return (np.asarray(signal, dtype=float) / (np.asarray(interference, dtype=float) + params.noise_power))[()]


def slot_rate(sinr_value, params: ChannelParams, active: bool = True):
    """Shannon rate within one slot, gated by the slot/transmitter occupancy."""
    s = np.asarray(sinr_value, dtype=float)
    if np.any(s < 0):
        raise ParameterError("SINR must be non-negative")
    if not active:
        return (s * 0.0)[()]
    return (params.efficiency * params.bandwidth * np.log2(1.0 + s))[()]


def frame_throughput(slot_rates: Sequence[float], frame) -> float:
    """Average throughput over a frame given the rate of each assigned slot."""
    if len(slot_rates) > frame.slots:
        raise ParameterError(f"{len(slot_rates)} slots assigned but a frame has only {frame.slots}")
    return math.fsum(r * frame.slot_time for r in slot_rates) / frame.duration


def slot_bits(rate, slot_time: float):
    """Whole bits one slot carries at ``rate`` (rounded to micro-bits, then floored)."""
    return np.floor(np.round(np.asarray(rate, dtype=float) * slot_time, 6)).astype(np.int64)[()]


def required_bits(qos: float, frame_duration: float) -> int:
    """Bits a flow must receive within one frame to meet its QoS rate."""
    return math.ceil(round(qos * frame_duration, 6))


def demand_from_bits(needed_bits: int, bits_per_slot: int):
    """Slots needed to carry ``needed_bits`` at ``bits_per_slot``."""
    if needed_bits <= 0:
        return 0
    if bits_per_slot <= 0:
        return UNSCHEDULABLE
    return -(-int(needed_bits) // int(bits_per_slot))


def slot_demand(qos: float, per_slot_rate: float, frame):
    """Number of slots a flow occupies to meet ``qos`` at a frozen per-slot rate."""
    if per_slot_rate < 0:
        raise ParameterError("per-slot rate must be non-negative")
    return demand_from_bits(required_bits(qos, frame.duration), int(slot_bits(per_slot_rate, frame.slot_time)))


def max_coverage_distance(budget: LinkBudget, params: ChannelParams, sensitivity: float,
                          db_per_km: float = 0.0, fixed_path_m: float | None = None) -> float:
    """Distance where the mean LoS received power falls to ``sensitivity``.

    Atmospheric loss is charged either along the whole link (ground links) or
    over a fixed in-atmosphere length ``fixed_path_m`` (space links).
    """

    def margin(d):
        path = d if fixed_path_m is None else fixed_path_m
        power = budget.eirp_gain * mean_path_gain(d, params) * atmospheric_factor(path, db_per_km)
        return math.log(power / sensitivity)

    free = math.sqrt(budget.eirp_gain * params.sigma / sensitivity) ** (2.0 / params.gamma)
    if margin(1e-3) <= 0:
        return 0.0
    return brentq(margin, 1e-3, free * 1.000001 + 1.0, xtol=1e-9, rtol=1e-13)


def rician_k_for_elevation(elevation_deg, table) -> np.ndarray:
    """Linear K from a piecewise-linear (elevation deg, K dB) table, clamped at the ends."""
    xs = [p[0] for p in table]
    ys = [p[1] for p in table]
    return db_to_linear(np.interp(np.asarray(elevation_deg, dtype=float), xs, ys))
