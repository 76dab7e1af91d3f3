import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # ─── Output ────────────────────────────────────────────────
    multitax_output_dir: str = Field(
        "outputs", description="Directory receiving bundles and reports")

    # ─── Logging ───────────────────────────────────────────────
    multitax_log_level: str = Field("INFO", description="Root log level")

    # ─── Tracing (Opik) ─────────────────────────────────────────
    multitax_tracing: bool = Field(
        False, description="Send @opik.track spans for pipeline operations")

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()

if not settings.multitax_tracing:
    os.environ.setdefault("OPIK_TRACK_DISABLE", "true")
