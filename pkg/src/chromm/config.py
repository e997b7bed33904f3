"""Pipeline and scenario configuration.

One TOML file with [pipeline], [scenario], and [tolerances] sections, every
key mirroring a dataclass field below. Unknown sections or keys are rejected,
and ``--set section.key=value`` overrides are applied after the file. The
embedded defaults are printable via the ``describe-config`` CLI command.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError

ASSOCIATION_MODES = ("combined", "position", "pose")
FUSION_STRATEGIES = ("avg_tri", "maxpool_tri", "only_avg")
SCALE_ESTIMATORS = ("mean", "median")
THETA_MEAN_MODES = ("axis_angle", "per_joint_quaternion")


@dataclass(frozen=True)
class PipelineConfig:
    # Eq.-style matching weights; must sum to 1. association_mode overrides
    # them to (1, 0) / (0, 1) for the position-only / pose-only ablations.
    lambda_position: float = 0.8
    lambda_pose: float = 0.2
    association_mode: str = "combined"
    gamma_match: float = 1.0
    gamma_outlier: float = 0.5
    gamma_reid: float = 0.35
    view_graph_k: int = 2
    sinkhorn_epsilon: float = 0.05
    sinkhorn_max_iterations: int = 100
    sinkhorn_tolerance: float = 1e-6
    fusion_strategy: str = "avg_tri"
    theta_mean_mode: str = "axis_angle"
    scale_adjustment: bool = True
    scale_estimator: str = "mean"
    min_image_length_px: float = 2.0
    chunk_size: int = 0
    chunk_overlap: int = 2
    stitch_link_threshold: float = 0.75
    threads: int = 1

    def effective_weights(self) -> tuple[float, float]:
        """(position weight, pose weight) after applying association_mode."""
        if self.association_mode == "position":
            return 1.0, 0.0
        if self.association_mode == "pose":
            return 0.0, 1.0
        return self.lambda_position, self.lambda_pose


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    timesteps: int = 25
    views: int = 4
    people: int = 3
    token_dim: int = 64
    # Expected same-person token displacement per frame (per-component sigma
    # is token_noise / sqrt(2 * token_dim)); archetypes sit token_separation
    # apart so distinct identities stay well outside gamma_match.
    token_noise: float = 0.0
    token_separation: float = 2.0
    keypoint_noise_px: float = 0.0
    # One knob for body-parameter corruption: pose and shape entries (additive),
    # root rotation (axis-angle perturbation, radians), and coarse depth
    # (relative) all use this sigma.
    param_noise: float = 0.0
    occlusion_rate: float = 0.0
    # corrupted scene scale / true scale; camera translations and depths are
    # written at the corrupted scale, bodies stay metric.
    scale_error: float = 1.0
    true_scale: float = 1.0
    camera_radius: float = 4.0
    camera_height: float = 1.0
    target_height: float = 1.0
    camera_orbit_deg: float = 0.0
    focal_px: float = 600.0
    image_size_px: float = 512.0
    walk_radius: float = 1.5
    walk_step: float = 0.045
    walk_damping: float = 0.85
    min_person_distance: float = 1.2
    pose_amplitude: float = 0.2
    pelvis_coarse_rate: float = 0.0
    coarse_pelvis_noise_px: float = 0.0
    ambiguous_pair: bool = False


@dataclass(frozen=True)
class Tolerances:
    triangulation_condition_limit: float = 1e8
    parallel_ray_tolerance: float = 1e-6
    static_trajectory_min_path: float = 1e-6


@dataclass(frozen=True)
class Config:
    pipeline: PipelineConfig = dataclasses.field(default_factory=PipelineConfig)
    scenario: ScenarioConfig = dataclasses.field(default_factory=ScenarioConfig)
    tolerances: Tolerances = dataclasses.field(default_factory=Tolerances)


_SECTIONS = {
    "pipeline": PipelineConfig,
    "scenario": ScenarioConfig,
    "tolerances": Tolerances,
}


def _coerce(section: str, name: str, value, target_type):
    if target_type is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if target_type is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if target_type is bool and isinstance(value, bool):
        return value
    if target_type is str and isinstance(value, str):
        return value
    raise ConfigError(
        f"{section}.{name} must be of type {target_type.__name__}, got {value!r}"
    )


def _build_section(section: str, data: dict):
    cls = _SECTIONS[section]
    known = {f.name: f.type for f in fields(cls)}
    type_map = {"float": float, "int": int, "bool": bool, "str": str}
    values = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key '{section}.{key}'")
        values[key] = _coerce(section, key, value, type_map[known[key]])
    return cls(**values)


def _positive(section, name, value):
    if not value > 0:
        raise ConfigError(f"{section}.{name} must be positive (got {value})")


def _non_negative(section, name, value):
    if value < 0:
        raise ConfigError(f"{section}.{name} must be non-negative (got {value})")


def validate(config: Config) -> Config:
    p, s, t = config.pipeline, config.scenario, config.tolerances
    if abs(p.lambda_position + p.lambda_pose - 1.0) > 1e-9:
        raise ConfigError(
            "pipeline.lambda_position + pipeline.lambda_pose must equal 1 "
            f"(got {p.lambda_position} + {p.lambda_pose})"
        )
    for name in ("lambda_position", "lambda_pose"):
        _non_negative("pipeline", name, getattr(p, name))
    if p.association_mode not in ASSOCIATION_MODES:
        raise ConfigError(f"pipeline.association_mode must be one of {ASSOCIATION_MODES}")
    if p.fusion_strategy not in FUSION_STRATEGIES:
        raise ConfigError(f"pipeline.fusion_strategy must be one of {FUSION_STRATEGIES}")
    if p.scale_estimator not in SCALE_ESTIMATORS:
        raise ConfigError(f"pipeline.scale_estimator must be one of {SCALE_ESTIMATORS}")
    if p.theta_mean_mode not in THETA_MEAN_MODES:
        raise ConfigError(f"pipeline.theta_mean_mode must be one of {THETA_MEAN_MODES}")
    for name in ("gamma_match", "gamma_outlier", "gamma_reid", "sinkhorn_epsilon",
                 "sinkhorn_tolerance", "stitch_link_threshold"):
        _positive("pipeline", name, getattr(p, name))
    for name in ("view_graph_k", "sinkhorn_max_iterations", "threads"):
        if getattr(p, name) < 1:
            raise ConfigError(f"pipeline.{name} must be >= 1 (got {getattr(p, name)})")
    _non_negative("pipeline", "min_image_length_px", p.min_image_length_px)
    _non_negative("pipeline", "chunk_size", p.chunk_size)
    _non_negative("pipeline", "chunk_overlap", p.chunk_overlap)
    for name in ("timesteps", "views", "people", "token_dim"):
        if getattr(s, name) < 1:
            raise ConfigError(f"scenario.{name} must be >= 1 (got {getattr(s, name)})")
    if not 0.0 <= s.occlusion_rate <= 1.0:
        raise ConfigError(
            f"scenario.occlusion_rate must be between 0 and 1 (got {s.occlusion_rate})"
        )
    for name in ("scale_error", "true_scale", "camera_radius", "focal_px",
                 "image_size_px", "token_separation"):
        _positive("scenario", name, getattr(s, name))
    for name in ("token_noise", "keypoint_noise_px", "param_noise", "walk_radius",
                 "walk_step", "min_person_distance", "pose_amplitude",
                 "coarse_pelvis_noise_px"):
        _non_negative("scenario", name, getattr(s, name))
    if not 0.0 <= s.walk_damping < 1.0:
        raise ConfigError(f"scenario.walk_damping must be in [0, 1) (got {s.walk_damping})")
    if not 0.0 <= s.pelvis_coarse_rate <= 1.0:
        raise ConfigError(
            f"scenario.pelvis_coarse_rate must be between 0 and 1 (got {s.pelvis_coarse_rate})"
        )
    for name in ("triangulation_condition_limit", "parallel_ray_tolerance",
                 "static_trajectory_min_path"):
        _positive("tolerances", name, getattr(t, name))
    return config


def _parse_override(raw: str) -> tuple[str, str, object]:
    if "=" not in raw:
        raise ConfigError(f"--set expects section.key=value (got {raw!r})")
    target, text = raw.split("=", 1)
    if "." not in target:
        raise ConfigError(f"--set expects section.key=value (got {raw!r})")
    section, key = target.split(".", 1)
    try:
        value = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        value = text  # bare string
    return section.strip(), key.strip(), value


def load_config(path: str | None = None, overrides: list[str] | None = None) -> Config:
    """Load, override, and validate a configuration."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}")
    for section in raw:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"config section '{section}' must be a table")
    for item in overrides or []:
        section, key, value = _parse_override(item)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section '{section}'")
        raw.setdefault(section, {})[key] = value
    config = Config(
        pipeline=_build_section("pipeline", raw.get("pipeline", {})),
        scenario=_build_section("scenario", raw.get("scenario", {})),
        tolerances=_build_section("tolerances", raw.get("tolerances", {})),
    )
    return validate(config)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    return repr(value)


def describe() -> str:
    """Default configuration rendered as TOML."""
    lines = []
    for section, cls in _SECTIONS.items():
        lines.append(f"[{section}]")
        instance = cls()
        for f in fields(cls):
            lines.append(f"{f.name} = {_format_value(getattr(instance, f.name))}")
        lines.append("")
    return "\n".join(lines)


def config_to_dict(config: Config) -> dict:
    return {
        "pipeline": dataclasses.asdict(config.pipeline),
        "scenario": dataclasses.asdict(config.scenario),
        "tolerances": dataclasses.asdict(config.tolerances),
    }
