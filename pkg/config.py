import logging
import os
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load solver defaults from .env
load_dotenv()

MAX_SIM_QUBITS = os.getenv("RYDBERG_MAX_SIM_QUBITS", "26")
HEAVISIDE = os.getenv("RYDBERG_HEAVISIDE", "inclusive")
VARIANT_THRESHOLD = os.getenv("RYDBERG_VARIANT_THRESHOLD", "1.0")
SEED = os.getenv("RYDBERG_SEED", "7")
LOG_LEVEL = os.getenv("RYDBERG_LOG_LEVEL", "WARNING")

# Dense backend is only worth it for small widths; wider states go through the support backend
DENSE_BACKEND_LIMIT = 12
# enumerate_solutions refuses anything wider
ENUMERATION_LIMIT = 24


class SolverSettings(BaseModel):
    max_sim_qubits: int = Field(26, ge=1, le=40, description="Largest superposed width the simulator accepts")
    heaviside: Literal["inclusive", "strict"] = Field("inclusive", description="H(0)=1 (inclusive) or H(0)=0 (strict)")
    variant_threshold: float = Field(1.0, gt=0, description="Pack-wise oracle is used when N/n exceeds this ratio")
    seed: int = Field(7, ge=0, description="Default seed for experiments and random instances")
    log_level: str = Field("WARNING", description="Root logging level")

    @property
    def strict(self) -> bool:
        return self.heaviside == "strict"


def load_settings(**overrides) -> SolverSettings:
    """
    Build settings from the environment, then apply explicit overrides.

    Args:
        **overrides: field values that win over the environment (None values are ignored)

    Returns:
        SolverSettings: validated settings
    """
    settings = SolverSettings(
        max_sim_qubits=int(MAX_SIM_QUBITS),
        heaviside=HEAVISIDE,
        variant_threshold=float(VARIANT_THRESHOLD),
        seed=int(SEED),
        log_level=LOG_LEVEL,
    )
    update = {key: value for key, value in overrides.items() if value is not None}
    if update:
        settings = SolverSettings(**{**settings.model_dump(), **update})
    return settings


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
