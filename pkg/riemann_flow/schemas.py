from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class LossBreakdown(BaseModel):
    task: float = Field(ge=0.0)
    rad: float = Field(ge=0.0)
    ang: float = Field(ge=0.0)
    fm: float = Field(ge=0.0)
    total: float
    lambdas: tuple[float, float, float] = (0.1, 0.1, 0.1)


class AngularGateReport(BaseModel):
    confidence: list[float]
    mask: list[bool]
    weight: list[float]  # alpha_i = exp(-|v_i|)
    pseudo_label: list[int]
    effective_count: float

    @model_validator(mode="after")
    def _aligned(self) -> AngularGateReport:
        n = len(self.confidence)
        if not (len(self.mask) == len(self.weight) == len(self.pseudo_label) == n):
            raise ValueError("gate report fields must have one entry per sample")
        return self

    @property
    def gated_fraction(self) -> float:
        return sum(self.mask) / len(self.mask) if self.mask else 0.0


class CouplingPlan(BaseModel):
    pairs: list[tuple[int, int]]
    strategy: Literal["class_nearest_neighbor", "global_nearest_neighbor"] = "class_nearest_neighbor"
    fallback: list[bool] = Field(default_factory=list)

    @model_validator(mode="after")
    def _each_source_once(self) -> CouplingPlan:
        sources = [s for s, _ in self.pairs]
        if len(set(sources)) != len(sources):
            raise ValueError("each source index must appear exactly once")
        if self.fallback and len(self.fallback) != len(self.pairs):
            raise ValueError("fallback flags must align with pairs")
        return self

    @property
    def sources(self) -> list[int]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[int]:
        return [t for _, t in self.pairs]


class SpectrumReport(BaseModel):
    real: list[float]
    imag: list[float]
    max_abs_real_part: float
    any_nonzero_imag: bool

    @property
    def eigenvalues(self) -> list[complex]:
        return [complex(re, im) for re, im in zip(self.real, self.imag, strict=True)]


class LyapunovReport(BaseModel):
    monotone: bool
    violations: list[int] = Field(default_factory=list)
    residuals: list[float] = Field(default_factory=list)
    max_residual: float = 0.0
    tolerance: float = 0.0
    oscillating: bool = False


class GradNormStats(BaseModel):
    mean: float
    variance: float = Field(ge=0.0)
    count: int


class MetricsRow(BaseModel):
    epoch: int
    task: float
    rad: float
    ang: float
    fm: float
    total: float
    source_accuracy: float = Field(ge=0.0, le=1.0)
    target_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    gated_fraction: float = Field(ge=0.0, le=1.0)
    grad_norm: float


class GeomCheckRow(BaseModel):
    suite: str
    curvature: float
    cases: int
    max_error: float
    tolerance: float
    passed: bool


class VolumeRow(BaseModel):
    curvature: float
    dim: int
    radius: float
    volume: float
    normalized: float


__all__ = [
    "AngularGateReport",
    "CouplingPlan",
    "GeomCheckRow",
    "GradNormStats",
    "LossBreakdown",
    "LyapunovReport",
    "MetricsRow",
    "SpectrumReport",
    "VolumeRow",
]
