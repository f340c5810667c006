from enum import Enum
from typing import FrozenSet, List, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from services.grading.schemas import GleasonScore, Verdict


class ReadFlag(str, Enum):
    UNGRADEABLE = "ungradeable"


class Read(BaseModel):
    case_id: str
    reader_id: str
    round: int = Field(ge=1, le=3)
    verdict: Optional[Verdict] = None
    tumor_volume_estimate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    flags: FrozenSet[ReadFlag] = frozenset()

    @model_validator(mode="after")
    def validate_read(self) -> "Read":
        if self.verdict is None and ReadFlag.UNGRADEABLE not in self.flags:
            raise ValueError("only an ungradeable read may omit its verdict")
        return self

    @property
    def ungradeable(self) -> bool:
        return ReadFlag.UNGRADEABLE in self.flags


class IhcRecord(BaseModel):
    case_id: str
    malignant: bool


class CaseStatus(str, Enum):
    CONSENSUS_FULL = "consensus_full"
    CONSENSUS_MAJORITY = "consensus_majority"
    NEEDS_ROUND2 = "needs_round2"
    NEEDS_MEETING = "needs_meeting"
    EXCLUDED = "excluded"
    FINAL = "final"


TERMINAL_STATUSES = frozenset(
    {
        CaseStatus.CONSENSUS_FULL,
        CaseStatus.CONSENSUS_MAJORITY,
        CaseStatus.EXCLUDED,
        CaseStatus.FINAL,
    }
)


class HistoryEntry(BaseModel):
    round: int
    status: CaseStatus
    dissenter: Optional[str] = None


class CaseState(BaseModel):
    case_id: str
    status: CaseStatus
    verdict: Optional[Verdict] = None
    dissenter: Optional[str] = None
    # the reads the current status was decided on, by reader id
    reads: List[Read]
    ihc: Optional[IhcRecord] = None
    history: List[HistoryEntry]

    @property
    def is_terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES


class RoutingRow(BaseModel):
    round: int
    status: CaseStatus
    count: int
    percent: float


class WorklistEntry(BaseModel):
    case_id: str
    status: CaseStatus
    dissenter: Optional[str] = None


class ReferenceEntry(BaseModel):
    case_id: str
    status: CaseStatus
    verdict: Optional[Verdict] = None


class CaseFailure(BaseModel):
    case_id: str
    detail: str


class ProtocolResult(BaseModel):
    states: List[CaseState]
    reference: List[ReferenceEntry]
    routing: List[RoutingRow]
    worklist: List[WorklistEntry]
    round1_mean_kappa: Optional[float] = None
    # cases whose recorded reads the protocol rejected, when failures are isolated
    failed: List[CaseFailure] = []


class ReadIn(BaseModel):
    case_id: str
    reader_id: str
    round: int = Field(ge=1, le=3)
    malignant: Optional[bool] = None
    primary: Optional[int] = None
    secondary: Optional[int] = None
    tertiary: Optional[int] = None
    tumor_volume_estimate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    ungradeable: bool = False

    @model_validator(mode="after")
    def validate_payload(self) -> "ReadIn":
        # building the domain read runs every score and flag check
        try:
            self.to_read()
        except ValidationError as e:
            raise ValueError(e.errors()[0]["msg"]) from e
        return self

    def to_read(self) -> Read:
        verdict = None
        if self.malignant is not None:
            verdict = Verdict(
                malignant=self.malignant,
                score=(
                    GleasonScore(
                        primary=self.primary, secondary=self.secondary, tertiary=self.tertiary
                    )
                    if self.malignant
                    else None
                ),
            )
        return Read(
            case_id=self.case_id,
            reader_id=self.reader_id,
            round=self.round,
            verdict=verdict,
            tumor_volume_estimate=self.tumor_volume_estimate,
            flags=frozenset({ReadFlag.UNGRADEABLE}) if self.ungradeable else frozenset(),
        )


class ReadOut(BaseModel):
    id: int
    case_id: str
    reader_id: str
    round: int
    malignant: Optional[bool]
    primary: Optional[int]
    secondary: Optional[int]
    tertiary: Optional[int]
    tumor_volume_estimate: Optional[float]
    ungradeable: bool

    class Config:
        from_attributes = True


class IhcOut(BaseModel):
    id: int
    case_id: str
    malignant: bool

    class Config:
        from_attributes = True
