from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class InputDigest(BaseModel):
    path: str
    sha256: Optional[str] = None
    # set instead of sha256 when the input could not be read
    error: Optional[str] = None


class RunManifest(BaseModel):
    command: str
    config_path: Optional[str] = None
    inputs: List[InputDigest]
    output_dir: str
    seed: Optional[int] = None
    tool_version: str


class EvaluationConfig(BaseModel):
    replicates: Optional[int] = Field(default=None, ge=1)
    iterations: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    ci_level: float = 0.95
    min_sensitivity: float = 0.99
    # named reader subsets for the permutation test, e.g. by years of experience
    panel_groups: Dict[str, List[str]] = {}

    @field_validator("ci_level", "min_sensitivity")
    def validate_fraction(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("must lie in (0, 1]")
        return v
