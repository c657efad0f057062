"""Cache configuration settings."""

from typing import Self

from pydantic import SecretStr, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class CacheRedisSettings(BaseSettings):
    """Redis cache backend configuration."""

    host: str | None = None
    port: int = 6379
    password: SecretStr | None = None
    db: int = 0

    model_config = SettingsConfigDict(
        env_prefix="HDPERM_CACHE_REDIS_", env_file=".env", extra="ignore"
    )


class CacheFilesystemSettings(BaseSettings):
    """Local directory cache backend configuration."""

    path: str = ".hdperm-cache"

    model_config = SettingsConfigDict(
        env_prefix="HDPERM_CACHE_FS_", env_file=".env", extra="ignore"
    )


class CacheSettings(BaseSettings):
    """Base cache configuration."""

    enable: bool = False
    backend: str = "filesystem"  # filesystem or redis
    namespace: str = "hdperm"
    ttl: int | None = None  # None keeps entries until cleared

    # Nested settings for backends
    redis: CacheRedisSettings | None = None
    filesystem: CacheFilesystemSettings | None = None

    model_config = SettingsConfigDict(
        env_prefix="HDPERM_CACHE_", env_file=".env", extra="ignore"
    )

    @model_validator(mode="after")
    def validate_backend_settings(self) -> Self:
        """Validate backend-specific settings."""
        if not self.enable:
            return self

        prefix = self.model_config.get("env_prefix", "HDPERM_CACHE_")
        if self.backend == "redis":
            if not self.redis:
                self.redis = CacheRedisSettings(_env_prefix=f"{prefix}REDIS_")
        elif self.backend == "filesystem":
            if not self.filesystem:
                self.filesystem = CacheFilesystemSettings(_env_prefix=f"{prefix}FS_")
        else:
            raise ValueError(f"Unsupported cache backend: {self.backend}")

        return self
