"""Request bodies for the annotation service (responses are plain dicts)."""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class LabelEdit(BaseModel):
    """One point edit; ``label: null`` clears the point's label."""

    index: int = Field(ge=0)
    label: Optional[int] = None

    @field_validator("label")
    @classmethod
    def _known_code(cls, value):
        if value is not None and value not in (0, 1, 2):
            raise ValueError("label must be 0, 1, 2, or null to clear")
        return value


class LabelEditRequest(BaseModel):
    edits: list[LabelEdit] = Field(default_factory=list)


class TrainRequest(BaseModel):
    """Training always starts from a fresh random initialization."""

    model_config = ConfigDict(populate_by_name=True)

    epochs: int = Field(default=5000, ge=1, le=1_000_000)
    seed: int = 0
    classes: Optional[int] = Field(
        default=None, ge=2, le=3,
        description="Defaults to the number of labeled classes present.")
    learning_rate: float = Field(default=0.01, gt=0, alias="learningRate")
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch: int = Field(default=100, ge=1)
