from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .utils import canonical_json, sha256_hex

CONFIG_SCHEMA_VERSION = "1"


class Settings(BaseSettings):
    jobs: int = 1
    out_dir: Path = Path("out")
    log_level: str = "INFO"
    model_config = SettingsConfigDict(env_prefix="PANEL_CF_", env_file=".env", extra="ignore")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsConfig(_Section):
    panel: Path
    covariates: Optional[Path] = None
    out: Optional[Path] = None

    @model_validator(mode="after")
    def _inputs_exist(self) -> "PathsConfig":
        if not self.panel.is_file():
            raise ValueError(f"file panel tidak ditemukan: {self.panel}")
        if self.covariates is not None and not self.covariates.is_file():
            raise ValueError(f"file kovariat tidak ditemukan: {self.covariates}")
        return self


class PanelPrep(_Section):
    layout: Literal["units_as_rows", "long_format"] = "units_as_rows"
    impute: bool = False
    log_transform: bool = False
    drop_zero_variance: bool = False
    drop_units: list[str] = Field(default_factory=list)


class MaskConfig(_Section):
    treated: list[str] = Field(min_length=1)
    t0: Optional[int] = Field(None, ge=1)
    t0_label: Optional[Union[int, str]] = None

    @model_validator(mode="after")
    def _one_t0(self) -> "MaskConfig":
        if (self.t0 is None) == (self.t0_label is None):
            raise ValueError("isi tepat satu dari mask.t0 atau mask.t0_label")
        return self


class EstimatorConfig(_Section):
    name: str = "did"
    params: dict[str, Any] = Field(default_factory=dict)


class InferenceConfig(_Section):
    alpha: float = 0.05
    cap: int = Field(10_000, ge=1)
    n_delta: int = Field(500, ge=2)
    two_sided: bool = True
    corrected: bool = False

    @field_validator("alpha")
    @classmethod
    def _alpha_open_interval(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("inference.alpha harus di (0, 1)")
        return v


class PlaceboSection(_Section):
    estimators: list[str] = Field(default_factory=lambda: ["did"])
    t0_ratios: list[float] = Field(default_factory=lambda: [0.5])
    n_trials: int = Field(10, ge=1)
    subsample: list[tuple[int, int]] = Field(default_factory=list)
    params: dict[str, dict[str, Any]] = Field(default_factory=dict)


class RunConfig(_Section):
    """Isi file TOML satu run. Kunci bertitik (`mask.t0 = 87`) dipetakan ke seksi."""

    seed: int
    paths: PathsConfig
    panel: PanelPrep = Field(default_factory=PanelPrep)
    mask: Optional[MaskConfig] = None
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    placebo: PlaceboSection = Field(default_factory=PlaceboSection)

    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.model_dump(mode="json")))

    def estimator_params(self, name: str) -> dict[str, Any]:
        if name in self.placebo.params:
            return dict(self.placebo.params[name])
        return dict(self.estimator.params) if name == self.estimator.name else {}

    def require_mask(self) -> MaskConfig:
        if self.mask is None:
            raise ValueError("config butuh seksi [mask] (treated dan t0) untuk perintah ini")
        return self.mask


def _resolve(base: Path, value: Any) -> Any:
    if value is None:
        return None
    p = Path(str(value)).expanduser()
    return str(p if p.is_absolute() else (base / p))


def load_run_config(path: Union[str, Path], seed: Optional[int] = None) -> RunConfig:
    """Baca dan validasi config TOML; path relatif diselesaikan terhadap folder config."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file config tidak ditemukan: {p}")
    with p.open("rb") as fh:
        data = tomllib.load(fh)
    base = p.resolve().parent
    paths = data.get("paths")
    if isinstance(paths, dict):
        for key in ("panel", "covariates", "out"):
            if key in paths:
                paths[key] = _resolve(base, paths[key])
    if seed is not None:
        data["seed"] = seed
    return RunConfig.model_validate(data)
