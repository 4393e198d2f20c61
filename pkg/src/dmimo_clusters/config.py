"""Pipeline configuration: defaults, YAML loading, validation, overrides.

The config file is a single YAML document with nested sections; every run
emits the fully resolved configuration so reports are self-describing.
CLI flags override file values, which override the defaults below.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import yaml

from .errors import ConfigError


@dataclass
class InputsConfig:
    mpcs: Optional[str] = None
    point_cloud: Optional[str] = None
    panels: Optional[str] = None
    trajectory: Optional[str] = None


@dataclass
class GeometryConfig:
    delta0_m: float = 0.5          # ray-candidate distance threshold
    dbscan_eps_m: Optional[float] = None   # defaults to delta0_m
    dbscan_min_pts: int = 4


@dataclass
class ClusteringConfig:
    delta_mcd: float = 7.0
    zeta: float = 1.0
    cvi_grid: Optional[List[float]] = None   # when set, selects delta_mcd per snapshot grid
    max_iter: int = 100


@dataclass
class TrackingConfig:
    enabled: bool = True
    n_th: int = 5
    q_diag: List[float] = field(default_factory=lambda: [
        0.1**2, 0.05**2, 0.1**2, 0.05**2, 0.1**2, 0.05**2, 0.3**2, 0.15**2])
    r_diag: List[float] = field(default_factory=lambda: [0.3**2, 0.3**2, 0.3**2, 1.0**2])
    init_cov_factor: float = 10.0
    init_velocity_var: float = 1e4


@dataclass
class VisibilityConfig:
    delta_c_th: float = 0.1
    delta_p_th: float = 0.02
    delta_d_bs_m: float = 0.6      # panel spacing
    delta_d_ue_m: float = 0.24     # mean per-snapshot UE movement
    delta0_bs_m: float = 0.2       # minimum complete BS-VR length
    delta0_ue_m: float = 0.24      # minimum complete UE-VR length


@dataclass
class StatsConfig:
    tau_cut_s: Optional[float] = None   # None selects the noise-floor policy


@dataclass
class PipelineConfig:
    inputs: InputsConfig = field(default_factory=InputsConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    visibility: VisibilityConfig = field(default_factory=VisibilityConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    output_dir: str = "out"
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        g = self.geometry
        if g.delta0_m <= 0:
            raise ConfigError(f"geometry.delta0_m must be positive, got {g.delta0_m}")
        if g.dbscan_eps_m is not None and g.dbscan_eps_m <= 0:
            raise ConfigError("geometry.dbscan_eps_m must be positive")
        if g.dbscan_min_pts < 1:
            raise ConfigError("geometry.dbscan_min_pts must be >= 1")
        c = self.clustering
        if c.delta_mcd <= 0:
            raise ConfigError(f"clustering.delta_mcd must be positive, got {c.delta_mcd}")
        if c.zeta <= 0:
            raise ConfigError(f"clustering.zeta must be positive, got {c.zeta}")
        if c.cvi_grid is not None and not c.cvi_grid:
            raise ConfigError("clustering.cvi_grid must be non-empty when set")
        t = self.tracking
        if t.n_th < 1:
            raise ConfigError(f"tracking.n_th must be >= 1, got {t.n_th}")
        if len(t.q_diag) != 8 or len(t.r_diag) != 4:
            raise ConfigError("tracking.q_diag needs 8 entries, r_diag needs 4")
        if any(q < 0 for q in t.q_diag) or any(r < 0 for r in t.r_diag):
            raise ConfigError("tracking noise variances must be non-negative")
        v = self.visibility
        for name in ("delta_c_th", "delta_p_th"):
            val = getattr(v, name)
            if not 0.0 <= val < 1.0:
                raise ConfigError(f"visibility.{name} must lie in [0, 1), got {val}")
        for name in ("delta_d_bs_m", "delta_d_ue_m"):
            if getattr(v, name) <= 0:
                raise ConfigError(f"visibility.{name} must be positive")
        for name in ("delta0_bs_m", "delta0_ue_m"):
            if getattr(v, name) < 0:
                raise ConfigError(f"visibility.{name} must be non-negative")
        if self.stats.tau_cut_s is not None and self.stats.tau_cut_s <= 0:
            raise ConfigError("stats.tau_cut_s must be positive when set")
        return self

    def resolved(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "inputs": InputsConfig,
    "geometry": GeometryConfig,
    "clustering": ClusteringConfig,
    "tracking": TrackingConfig,
    "visibility": VisibilityConfig,
    "stats": StatsConfig,
}


def config_from_mapping(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            valid = set(cls.__dataclass_fields__)
            unknown = set(value) - valid
            if unknown:
                raise ConfigError(f"unknown keys in section {key!r}: {sorted(unknown)}")
            kwargs[key] = cls(**value)
        elif key in ("output_dir", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return PipelineConfig(**kwargs).validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return config_from_mapping(data)


def apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply dotted-key overrides like {'clustering.delta_mcd': 5.0}."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        parts = dotted.split(".")
        target = config
        for p in parts[:-1]:
            if not hasattr(target, p):
                raise ConfigError(f"unknown config override {dotted!r}")
            target = getattr(target, p)
        if not hasattr(target, parts[-1]):
            raise ConfigError(f"unknown config override {dotted!r}")
        setattr(target, parts[-1], value)
    return config.validate()
