"""hdperm.inference settings."""

from functools import lru_cache

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from hdperm.cache import CacheSettings


class InferenceSettings(BaseSettings):
    """Inference defaults"""

    n_jobs: int = 1
    default_alpha: float = 0.05
    default_flips: int = 200
    default_splits: int = 50
    gamma_min: float = 0.05

    # Fraction of failed replications tolerated by run_experiment
    max_failure_rate: float = 0.01

    # Significant digits written to CSV outputs
    csv_precision: int = 10

    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="HDPERM_", env_file=".env", extra="ignore"
    )

    @field_validator("n_jobs")
    def check_n_jobs(cls, v):
        """Require a positive worker count."""
        if v < 1:
            raise ValueError("n_jobs must be >= 1")
        return v

    @field_validator("log_level")
    def parse_log_level(cls, v):
        """Normalize log level."""
        return v.strip().upper()

    @property
    def float_format(self) -> str:
        """printf-style float format used for CSV outputs."""
        return f"%.{self.csv_precision}g"


class StatsCacheSettings(CacheSettings):
    """Statistics cache settings."""

    model_config = SettingsConfigDict(
        env_prefix="HDPERM_CACHE_", env_file=".env", extra="ignore"
    )


@lru_cache(maxsize=1)
def inference_settings() -> InferenceSettings:
    """This function returns a cached instance of the InferenceSettings object."""
    return InferenceSettings()


@lru_cache(maxsize=1)
def cache_settings() -> StatsCacheSettings:
    """This function returns a cached instance of the StatsCacheSettings object."""
    return StatsCacheSettings()
