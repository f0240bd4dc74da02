"""Spatial model: train track, coverage spans, circular LEO orbit, distances.

Two coordinate systems coexist. Ground-segment distances (MR to BS, MR to
airship) use a local Cartesian frame with the track on the x-axis and the
airship above the origin. Satellite distances use geodetic coordinates, with
every MR pinned to the airship's latitude/longitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ScenarioError

EARTH_RADIUS_M = 6371.0e3
EARTH_MASS_KG = 5.972e24
GRAVITATIONAL_CONSTANT = 6.674e-11


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.z < 0:
            raise ParameterError(f"height must be non-negative, got z={self.z}")


@dataclass(frozen=True)
class GeoCoordinate:
    """Latitude/longitude in radians, altitude in metres."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not -math.pi / 2 - 1e-12 <= self.latitude <= math.pi / 2 + 1e-12:
            raise ParameterError(f"latitude {self.latitude} rad outside [-pi/2, pi/2]")
        if not -math.pi - 1e-12 <= self.longitude < math.pi + 1e-12:
            raise ParameterError(f"longitude {self.longitude} rad outside [-pi, pi)")


@dataclass(frozen=True)
class TrainPath:
    speed: float
    mr_count: int
    mr_spacing: float
    entry_x: float
    frame_advance: float
    mr_height: float = 4.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ParameterError("train speed must be positive")
        if self.mr_count < 1:
            raise ParameterError("mr_count must be at least 1")
        if self.mr_spacing < 0:
            raise ParameterError("mr_spacing must be non-negative")
        if self.frame_advance <= 0:
            raise ParameterError("frame_advance must be positive")


@dataclass(frozen=True)
class SatelliteOrbit:
    altitude: float
    inclination: float
    initial_position: GeoCoordinate
    earth_radius: float = EARTH_RADIUS_M
    earth_mass: float = EARTH_MASS_KG
    gravitational_constant: float = GRAVITATIONAL_CONSTANT

    def __post_init__(self):
        if self.altitude <= 0:
            raise ParameterError("satellite altitude must be positive")
        if not 0 < self.inclination <= math.pi:
            raise ParameterError("inclination must be in (0, pi]")
        if abs(self.initial_position.latitude) > min(self.inclination, math.pi - self.inclination) + 1e-12:
            raise ParameterError("initial latitude is unreachable at this inclination")

    @property
    def radius(self) -> float:
        return self.earth_radius + self.altitude


@dataclass(frozen=True)
class CoverageModel:
    """Maximum transmitter-receiver distances at the receiver sensitivity."""

    d_max_bs: float
    d_max_airship: float
    d_max_satellite: float
    # Satellite to airship uses the airship's higher receive gain.
    d_max_satellite_airship: float


def coverage_span(center: Position3D, d_max: float, receiver_height: float) -> float:
    """Length of track inside a transmitter's coverage circle (0 if none)."""
    radicand = d_max**2 - (center.z - receiver_height) ** 2 - center.y**2
    if radicand <= 0:
        return 0.0
    return 2.0 * math.sqrt(radicand)


def coverage_interval(center: Position3D, d_max: float, receiver_height: float) -> tuple[float, float]:
    """Entry and exit x-coordinates of the coverage circle on the track."""
    half = coverage_span(center, d_max, receiver_height) / 2.0
    return center.x - half, center.x + half


def mr_position(path: TrainPath, mr_index: int, frame: int) -> Position3D:
    if not 1 <= mr_index <= path.mr_count:
        raise ParameterError(f"MR index {mr_index} outside 1..{path.mr_count}")
    if frame < 1:
        raise ParameterError("frame index starts at 1")
    x = path.entry_x - (mr_index - 1) * path.mr_spacing + (frame - 1) * path.frame_advance
    return Position3D(x, 0.0, path.mr_height)


def mr_x_grid(path: TrainPath, frames: int) -> np.ndarray:
    """x-coordinates of every MR for frames 1..frames, shape (frames, mr_count)."""
    n = np.arange(frames, dtype=float)[:, None]
    i = np.arange(path.mr_count, dtype=float)[None, :]
    return path.entry_x - i * path.mr_spacing + n * path.frame_advance


def distance_to_site(mr: Position3D, site: Position3D) -> float:
    return math.dist((mr.x, mr.y, mr.z), (site.x, site.y, site.z))


def satellite_speed(orbit: SatelliteOrbit) -> float:
    return math.sqrt(orbit.gravitational_constant * orbit.earth_mass / orbit.radius)


def orbital_period(orbit: SatelliteOrbit) -> float:
    return 2.0 * math.pi * math.sqrt(orbit.radius**3 / (orbit.gravitational_constant * orbit.earth_mass))


def _wrap_longitude(lon: float) -> float:
    return (lon + math.pi) % (2.0 * math.pi) - math.pi


def _initial_argument(orbit: SatelliteOrbit) -> tuple[float, float]:
    """Argument of latitude and ascending-node longitude at t=0 (ascending half)."""
    inc = orbit.inclination
    lat0 = orbit.initial_position.latitude
    s = max(-1.0, min(1.0, math.sin(lat0) / math.sin(inc)))
    u0 = math.asin(s)
    node = orbit.initial_position.longitude - math.atan2(math.cos(inc) * math.sin(u0), math.cos(u0))
    return u0, node


def propagate_satellite(orbit: SatelliteOrbit, elapsed: float) -> GeoCoordinate:
    """Sub-satellite point after ``elapsed`` seconds on an ideal circular orbit.

    Earth rotation is ignored; at 90 deg inclination the ground track is a
    meridian crossed northbound on the ascending half.
    """
    u0, node = _initial_argument(orbit)
    u = u0 + satellite_speed(orbit) / orbit.radius * elapsed
    inc = orbit.inclination
    lat = math.asin(max(-1.0, min(1.0, math.sin(inc) * math.sin(u))))
    lon = node + math.atan2(math.cos(inc) * math.sin(u), math.cos(u))
    return GeoCoordinate(lat, _wrap_longitude(lon), orbit.altitude)


def propagate_satellite_many(orbit: SatelliteOrbit, elapsed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`propagate_satellite`; returns (latitudes, longitudes)."""
    u0, node = _initial_argument(orbit)
    u = u0 + satellite_speed(orbit) / orbit.radius * np.asarray(elapsed, dtype=float)
    inc = orbit.inclination
    lat = np.arcsin(np.clip(math.sin(inc) * np.sin(u), -1.0, 1.0))
    lon = node + np.arctan2(math.cos(inc) * np.sin(u), np.cos(u))
    return lat, (lon + np.pi) % (2.0 * np.pi) - np.pi


def _haversine_c(lat_a, lon_a, lat_b, lon_b):
    return np.sin((lat_a - lat_b) / 2.0) ** 2 + np.cos(lat_a) * np.cos(lat_b) * np.sin((lon_a - lon_b) / 2.0) ** 2


def haversine_horizontal(a: GeoCoordinate, b: GeoCoordinate, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle ground distance between two points."""
    c = float(_haversine_c(a.latitude, a.longitude, b.latitude, b.longitude))
    return 2.0 * radius * math.asin(math.sqrt(min(1.0, max(0.0, c))))


def haversine_many(lat, lon, ref: GeoCoordinate, radius: float = EARTH_RADIUS_M) -> np.ndarray:
    c = _haversine_c(np.asarray(lat), np.asarray(lon), ref.latitude, ref.longitude)
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(c, 0.0, 1.0)))


def slant_distance(horizontal, h_high, h_low):
    if np.any(np.asarray(h_high) < np.asarray(h_low)):
        raise ParameterError("h_high must not be below h_low")
    return np.sqrt(np.asarray(horizontal) ** 2 + (np.asarray(h_high) - np.asarray(h_low)) ** 2)[()]


def central_angle(horizontal, radius: float = EARTH_RADIUS_M):
    return np.asarray(horizontal) / radius


def horizon_angle(ground_altitude: float, satellite_altitude: float, radius: float = EARTH_RADIUS_M) -> float:
    """Largest central angle at which the satellite is still above the horizon."""
    return math.acos((radius + ground_altitude) / (radius + satellite_altitude))


def same_side_visible(sat: GeoCoordinate, ground: GeoCoordinate, radius: float = EARTH_RADIUS_M) -> bool:
    """True iff the satellite is strictly above the ground point's horizon plane."""
    if sat.altitude <= ground.altitude:
        return False
    angle = haversine_horizontal(sat, ground, radius) / radius
    return angle < horizon_angle(ground.altitude, sat.altitude, radius)


def elevation_angle(central, ground_altitude: float, satellite_altitude: float, radius: float = EARTH_RADIUS_M):
    """Elevation (rad) of a satellite seen from a ground point ``central`` rad away."""
    rg = radius + ground_altitude
    rs = radius + satellite_altitude
    c = np.asarray(central, dtype=float)
    return np.arctan2(rs * np.cos(c) - rg, rs * np.sin(c))[()]


def central_angle_for_elevation(elevation: float, ground_altitude: float, satellite_altitude: float,
                                radius: float = EARTH_RADIUS_M) -> float:
    """Inverse of :func:`elevation_angle`."""
    if not 0 < elevation <= math.pi / 2:
        raise ParameterError("elevation must be in (0, pi/2]")
    rg = radius + ground_altitude
    rs = radius + satellite_altitude
    return math.acos(rg * math.cos(elevation) / rs) - elevation


def satellite_start_for_elevation(anchor: GeoCoordinate, elevation: float, satellite_altitude: float,
                                  radius: float = EARTH_RADIUS_M) -> GeoCoordinate:
    """Sub-satellite start point giving ``elevation`` at ``anchor``.

    The point lies on the anchor's meridian, offset northwards so the
    northbound polar satellite recedes from the anchor as time advances.
    """
    offset = central_angle_for_elevation(elevation, anchor.altitude, satellite_altitude, radius)
    lat = anchor.latitude + offset
    if lat > math.pi / 2:
        raise ParameterError("elevation offset crosses the pole; choose a lower anchor latitude")
    return GeoCoordinate(lat, anchor.longitude, satellite_altitude)


def track_length(entry_x: float, exit_x: float) -> float:
    """Distance BH from entering the first BS to leaving the last one."""
    return exit_x - entry_x


def total_frames(path: TrainPath, entry_x: float, exit_x: float, frame_duration: float) -> int:
    """Frames needed for the whole train to cross the BS corridor.

    The crossing time is (BH + (N-1) d_MR) / v; dividing by the frame duration
    gives the frame count.
    """
    if frame_duration <= 0:
        raise ParameterError("frame duration must be positive")
    bh = track_length(entry_x, exit_x)
    if bh <= 0:
        raise ScenarioError("BS corridor has empty coverage (BH <= 0)")
    t_max = (bh + (path.mr_count - 1) * path.mr_spacing) / path.speed
    return math.floor(t_max / frame_duration)
