"""
2026 Module responsible for persisting recorded reads and IHC results and
replaying them through the consensus protocol.
"""
import logging
from collections import Counter
from typing import List

from sqlalchemy.orm import Session

from services.consensus.models import IhcResult, ReadRecord
from services.consensus.schemas import (
    CaseState,
    IhcRecord,
    ProtocolResult,
    Read,
    ReadIn,
    ReadFlag,
)
from services.consensus.service import READS_PER_CASE, replay_case, run_protocol
from services.exceptions import DuplicateIhc, DuplicateReader, WrongReadCount
from services.grading.schemas import GleasonScore, Verdict

logger = logging.getLogger(__name__)


def _to_read(record: ReadRecord) -> Read:
    verdict = None
    if record.malignant is not None:
        score = None
        if record.malignant:
            score = GleasonScore(
                primary=record.primary, secondary=record.secondary, tertiary=record.tertiary
            )
        verdict = Verdict(malignant=record.malignant, score=score)
    return Read(
        case_id=record.case_id,
        reader_id=record.reader_id,
        round=record.round,
        verdict=verdict,
        tumor_volume_estimate=record.tumor_volume_estimate,
        flags=frozenset({ReadFlag.UNGRADEABLE}) if record.ungradeable else frozenset(),
    )


def add_read(db: Session, payload: ReadIn) -> ReadRecord:
    """
    Store one read.
    :param db: Database connection used to interact with database objects.
    :param payload: The read as submitted.
    :return: The created ReadRecord object.
    :raises: DuplicateReader if the reader already read the case in that round,
        WrongReadCount if the case already holds its three first-round reads.
    """
    existing = (
        db.query(ReadRecord)
        .filter(
            ReadRecord.case_id == payload.case_id,
            ReadRecord.reader_id == payload.reader_id,
            ReadRecord.round == payload.round,
        )
        .first()
    )
    if existing:
        raise DuplicateReader(
            f"Reader {payload.reader_id} already read case {payload.case_id} "
            f"in round {payload.round}"
        )
    if payload.round == 1:
        first_round = (
            db.query(ReadRecord)
            .filter(ReadRecord.case_id == payload.case_id, ReadRecord.round == 1)
            .count()
        )
        if first_round >= READS_PER_CASE:
            raise WrongReadCount(
                f"Case {payload.case_id} already has {first_round} first-round reads"
            )
    record = ReadRecord(
        case_id=payload.case_id,
        reader_id=payload.reader_id,
        round=payload.round,
        malignant=payload.malignant,
        primary=payload.primary if payload.malignant else None,
        secondary=payload.secondary if payload.malignant else None,
        tertiary=payload.tertiary if payload.malignant else None,
        tumor_volume_estimate=payload.tumor_volume_estimate,
        ungradeable=payload.ungradeable,
    )
    db.add(record)
    db.commit()
    db.refresh(record)
    logger.info(f"Stored round {record.round} read of case {record.case_id} by {record.reader_id}")
    return record


def add_ihc(db: Session, payload: IhcRecord) -> IhcResult:
    """
    Store the IHC result of a case.
    :raises: DuplicateIhc if the case already has one.
    """
    if db.query(IhcResult).filter(IhcResult.case_id == payload.case_id).first():
        raise DuplicateIhc(f"Case {payload.case_id} already has an IHC result")
    record = IhcResult(case_id=payload.case_id, malignant=payload.malignant)
    db.add(record)
    db.commit()
    db.refresh(record)
    return record


def list_reads(db: Session, case_id: str | None = None) -> List[Read]:
    query = db.query(ReadRecord)
    if case_id is not None:
        query = query.filter(ReadRecord.case_id == case_id)
    records = query.order_by(ReadRecord.case_id, ReadRecord.round, ReadRecord.reader_id).all()
    return [_to_read(r) for r in records]


def list_ihc(db: Session) -> List[IhcRecord]:
    return [
        IhcRecord(case_id=r.case_id, malignant=r.malignant)
        for r in db.query(IhcResult).order_by(IhcResult.case_id).all()
    ]


def case_state(db: Session, case_id: str) -> CaseState | None:
    """
    Replay the stored reads of one case.
    :return: The case state, or None when the case has no reads.
    """
    reads = list_reads(db, case_id)
    if not reads:
        return None
    ihc = db.query(IhcResult).filter(IhcResult.case_id == case_id).first()
    record = IhcRecord(case_id=ihc.case_id, malignant=ihc.malignant) if ihc else None
    return replay_case(reads, record)


def protocol(db: Session) -> ProtocolResult:
    """
    Replay every stored case through the protocol.
    Cases still collecting their first-round reads are left out; a case whose
    stored reads the protocol rejects is logged and listed under ``failed``.
    """
    reads = list_reads(db)
    first_round = Counter(r.case_id for r in reads if r.round == 1)
    ready = {case for case, n in first_round.items() if n >= READS_PER_CASE}
    skipped = len({r.case_id for r in reads} - ready)
    if skipped:
        logger.info(f"{skipped} cases are still collecting first-round reads")
    return run_protocol(
        [r for r in reads if r.case_id in ready],
        [i for i in list_ihc(db) if i.case_id in ready],
        isolate_failures=True,
    )
