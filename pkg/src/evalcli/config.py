"""
Experiment configuration.

An experiment is described by one sectioned key-value file. `[system] kind` picks the
preset for that benchmark, file keys override the preset, and `--set section.key=value`
flags override the file. Process-level settings (output root, ledger, logging, worker
threads) come from `DNMPC_*` environment variables.
"""
import configparser
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..control import BehaviorCloneConfig, ControllerConfig
from ..datagen import GenConfig
from ..diffusion import DiffusionTrainConfig
from ..dynamics import SystemKind, SystemModel
from ..ocp import DEFAULT_TRANSFORMS, InputBox, OcpSpec, TransformKind
from ..solver import SolverConfig
from ..utils.fields import FloatList, IntList, StrList
from ..utils.integrity import digest_payload
from .presets import preset_for

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised when a configuration file or override cannot be turned into a valid experiment."""
    pass


# =============================================================================
# Runtime settings
# =============================================================================

class RuntimeSettings(BaseSettings):
    """Process settings read from DNMPC_* environment variables."""
    model_config = SettingsConfigDict(env_prefix="DNMPC_")

    output_root: Path = Path("runs")
    ledger_url: Optional[str] = None
    ledger_enabled: bool = True
    log_level: str = "INFO"
    workers: int = Field(default=1, ge=1)

    def resolved_ledger_url(self) -> str:
        """Explicit URL, else a SQLite file under the output root."""
        return self.ledger_url or f"sqlite:///{(self.output_root / 'ledger.db').as_posix()}"


# =============================================================================
# Sections
# =============================================================================

class OcpSection(BaseModel):
    """OCP keys as they appear in a file; the transform defaults to the system's own."""
    model_config = ConfigDict(frozen=True)

    horizon: int = Field(ge=1)
    q: FloatList
    r: FloatList
    p: FloatList
    lower: FloatList
    upper: FloatList
    transform: Optional[TransformKind] = None

    def to_spec(self, kind: SystemKind) -> OcpSpec:
        return OcpSpec(
            horizon=self.horizon,
            q=self.q,
            r=self.r,
            p=self.p,
            transform=self.transform or DEFAULT_TRANSFORMS[kind],
            box=InputBox(lower=self.lower, upper=self.upper),
        )


CONTROLLER_NAMES = ("diffusion", "local_mpc", "multistart_mpc", "behavior_clone",
                    "behavior_clone_global")


class ControlSection(ControllerConfig):
    """Controller settings plus the evaluation protocol (N episodes of S steps)."""
    episodes: int = Field(default=20, ge=1)
    controllers: StrList = Field(default_factory=lambda: ["diffusion", "local_mpc",
                                                          "multistart_mpc", "behavior_clone"])

    @model_validator(mode="after")
    def _check(self) -> "ControlSection":
        unknown = [name for name in self.controllers if name not in CONTROLLER_NAMES]
        if unknown:
            raise ValueError(f"Unknown controllers {unknown}; choose from {list(CONTROLLER_NAMES)}")
        return self


class MultimodalityConfig(BaseModel):
    """
    Settings of the multimodality metric.

    `threshold` is the pair separation in sequence L2 units; when unset it defaults to
    0.25 * box width * sqrt(H * n_u).
    """
    model_config = ConfigDict(frozen=True)

    samples: int = Field(default=20, ge=2)
    threshold: Optional[float] = Field(default=None, gt=0.0)
    probe_episodes: int = Field(default=10, ge=1)
    probe_steps: int = Field(default=50, ge=1)

    def resolved_threshold(self, spec: OcpSpec) -> float:
        if self.threshold is not None:
            return self.threshold
        width = float(spec.box.width.max())
        return 0.25 * width * (spec.horizon * spec.n_u) ** 0.5


class AblationKind(str, Enum):
    M = "M"
    H = "H"
    K = "K"


class AblationSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: AblationKind = AblationKind.M
    grid: IntList = Field(default_factory=lambda: [5, 20, 100])
    episodes: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "AblationSection":
        if not self.grid or any(v < 1 for v in self.grid):
            raise ValueError("Ablation grid must be non-empty with positive entries")
        return self


class TheoremSection(BaseModel):
    """Toy problem and Monte Carlo settings of the theorem checks."""
    model_config = ConfigDict(frozen=True)

    trials: int = Field(default=2000, ge=1)
    samples: IntList = Field(default_factory=lambda: [1, 5, 10])
    epsilon: float = Field(default=0.6, gt=0.0)
    global_mass: float = Field(default=0.3, gt=0.0, lt=1.0)
    mode_offset: float = Field(default=1.5, gt=0.0)
    mode_std: float = Field(default=0.15, gt=0.0)
    toy_records: int = Field(default=4000, ge=2)
    toy_epochs: int = Field(default=200, ge=1)
    calibration_draws: int = Field(default=2000, ge=1)
    coverage_doublings: int = Field(default=3, ge=1)
    coverage_probes: int = Field(default=200, ge=1)
    coverage_epsilon: float = Field(default=0.5, gt=0.0)


# =============================================================================
# Experiment
# =============================================================================

_SECTIONS: Dict[str, Type[BaseModel]] = {
    "system": SystemModel,
    "ocp": OcpSection,
    "solver": SolverConfig,
    "datagen": GenConfig,
    "diffusion": DiffusionTrainConfig,
    "behavior_clone": BehaviorCloneConfig,
    "control": ControlSection,
    "multimodality": MultimodalityConfig,
    "ablation": AblationSection,
    "theorem": TheoremSection,
}

# Sections whose `seed` key is driven by the experiment seed.
_SEEDED = ("datagen", "diffusion", "behavior_clone", "control")


class ExperimentConfig(BaseModel):
    """Fully validated experiment: every section plus the master seed."""
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    system: SystemModel
    ocp: OcpSection
    solver: SolverConfig = Field(default_factory=SolverConfig)
    datagen: GenConfig
    diffusion: DiffusionTrainConfig = Field(default_factory=DiffusionTrainConfig)
    behavior_clone: BehaviorCloneConfig = Field(default_factory=BehaviorCloneConfig)
    control: ControlSection = Field(default_factory=ControlSection)
    multimodality: MultimodalityConfig = Field(default_factory=MultimodalityConfig)
    ablation: AblationSection = Field(default_factory=AblationSection)
    theorem: TheoremSection = Field(default_factory=TheoremSection)

    @property
    def spec(self) -> OcpSpec:
        return self.ocp.to_spec(self.system.kind)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON dump; identifies a run exactly."""
        return digest_payload(self.model_dump(mode="json"))

    def _stage_digest(self, *sections: str) -> str:
        dump = self.model_dump(mode="json")
        return digest_payload({name: dump[name] for name in sections})

    def dataset_digest(self) -> str:
        return self._stage_digest("system", "ocp", "solver", "datagen")

    def denoiser_digest(self) -> str:
        return self._stage_digest("system", "ocp", "solver", "datagen", "diffusion")

    def policy_digest(self, global_targets: bool) -> str:
        return digest_payload({
            "stage": self._stage_digest("system", "ocp", "solver", "datagen", "behavior_clone"),
            "global": global_targets,
            "restarts": self.control.restarts if global_targets else 1,
        })

    def updated(self, section: str, **values: Any) -> "ExperimentConfig":
        """Copy with some keys of one section replaced (re-validated)."""
        dump = self.model_dump(mode="json")
        dump[section].update(values)
        return ExperimentConfig.model_validate(dump)


def parse_override(item: str) -> Tuple[str, str, str]:
    """Split "section.key=value" into (section, key, value)."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"Override '{item}' must look like section.key=value")
    target, value = item.split("=", 1)
    section, key = target.split(".", 1)
    return section.strip(), key.strip(), value.strip()


def _check_keys(raw: Dict[str, Dict[str, Any]]) -> None:
    for section, values in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"Unknown section [{section}]; expected one of {sorted(_SECTIONS)}")
        fields = set(_SECTIONS[section].model_fields)
        if section == "system":
            fields.add("seed")
        unknown = sorted(set(values) - fields)
        if unknown:
            raise ConfigError(f"Unknown keys in [{section}]: {', '.join(unknown)}")


def build_config(
    raw: Dict[str, Dict[str, Any]],
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """
    Assemble an ExperimentConfig from raw sections.

    Args:
        raw: Section -> key -> value (strings or native values)
        overrides: "section.key=value" items applied after `raw`
        seed: Master seed; wins over `[system] seed`

    Returns:
        Validated experiment configuration

    Raises:
        ConfigError: On unknown sections/keys, a missing system kind or invalid values
    """
    merged: Dict[str, Dict[str, Any]] = {name: dict(values) for name, values in raw.items()}
    for item in overrides:
        section, key, value = parse_override(item)
        merged.setdefault(section, {})[key] = value
    _check_keys(merged)

    kind_text = merged.get("system", {}).get("kind")
    if kind_text is None:
        raise ConfigError("[system] kind is required")
    try:
        kind = SystemKind(kind_text)
    except ValueError:
        raise ConfigError(f"Unknown system kind '{kind_text}'") from None

    sections = preset_for(kind)
    for name, values in merged.items():
        sections.setdefault(name, {}).update(values)

    master = sections["system"].pop("seed", 0)
    master = int(master) if seed is None else seed
    for name in _SEEDED:
        sections.setdefault(name, {})["seed"] = master

    try:
        return ExperimentConfig(seed=master, **sections)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc


def read_sections(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    """Parse a sectioned key-value file into plain dicts."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def load_config(
    path: Union[str, Path],
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
) -> ExperimentConfig:
    cfg = build_config(read_sections(path), overrides, seed)
    logger.debug("Loaded %s (digest %s)", path, cfg.digest()[:12])
    return cfg
