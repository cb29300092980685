import logging
import sys
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Toolkit settings, read from MELNIKOV_* environment variables and .env"""

    model_config = SettingsConfigDict(env_prefix="MELNIKOV_", env_file=".env", extra="ignore")

    quad_tol: float = 1e-10
    calibration_tol: float = 1e-8
    pf_step: float = 1e-5
    pf_tol: float = 1e-6
    zero_samples: int = 10_000
    refine_tol: float = 1e-12
    endpoint_margin: float = 1e-9
    sim_rtol: float = 1e-12
    sim_atol: float = 1e-12
    sim_eps: float = 1e-3
    sim_max_events: int = 64

    log_level: str = "INFO"
    log_dir: str = "logs"

    api_title: str = "Melnikov Toolkit"
    api_description: str = "Abelian-integral reduction and zero counting for piecewise perturbed quadratic centers"
    api_version: str = "1.0.0"
    api_host: str = "0.0.0.0"
    api_port: int = 8080


@lru_cache()
def get_settings() -> Settings:
    return Settings()


def setup_logging(settings: Settings = None) -> None:
    """
    Configure root logging once: file handler on <log_dir>/app.log plus a
    stream handler on stderr, so JSON written to stdout stays clean.
    """
    settings = settings or get_settings()
    logs_dir = Path(settings.log_dir)
    if not logs_dir.exists():
        logs_dir.mkdir(parents=True)

    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(logs_dir / "app.log", encoding="utf-8"),
            logging.StreamHandler(sys.stderr),
        ],
    )
