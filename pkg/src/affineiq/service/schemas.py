"""Request/response models of the 2AFC experiment service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class PairSpec(BaseModel):
    ref: str
    dist: str


class LevelSpec(BaseModel):
    level: float
    pairs: list[PairSpec] = Field(min_length=1)


class PlanSpec(BaseModel):
    kind: Literal["internal-d", "physical-theta"] = "internal-d"
    axis: str = "D"
    reps: int = 15
    levels: list[LevelSpec] = Field(min_length=1)


class SessionCreateRequest(BaseModel):
    observer: str = "anonymous"
    seed: Optional[int] = None
    experiment: Optional[str] = None  # name of a prepared experiment manifest
    plan: Optional[PlanSpec] = None  # or an inline plan


class SessionCreated(BaseModel):
    id: str
    observer: str
    total: int


class TrialPayload(BaseModel):
    done: bool
    index: Optional[int] = None
    total: int
    left: Optional[str] = None
    right: Optional[str] = None


class ResponseSubmission(BaseModel):
    index: int
    choice: Literal["left", "right"]


class ResponseAck(BaseModel):
    accepted: bool
    index: int
    done: bool


class LevelSummary(BaseModel):
    level: float
    trials: int
    correct: int


class SessionSummary(BaseModel):
    id: str
    observer: str
    kind: str
    axis: str
    total: int
    completed: int
    done: bool
    levels: list[LevelSummary]
