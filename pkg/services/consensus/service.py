"""
2026 Module responsible for the three-round expert consensus protocol.

Round 1 decides from three independent reads (and an IHC result when one
exists). A single dissenter re-grades in Round 2; cases still without
consensus go to a meeting whose verdict is final.
"""
import logging
from collections import Counter, defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from services.exceptions import (
    DuplicateIhc,
    DuplicateReader,
    FlagsNotAllowed,
    GleasonEngineError,
    InvariantViolation,
    WrongReadCount,
    WrongReader,
    WrongState,
)
from services.grading.schemas import Verdict
from services.consensus.schemas import (
    CaseFailure,
    CaseState,
    CaseStatus,
    HistoryEntry,
    IhcRecord,
    ProtocolResult,
    Read,
    ReferenceEntry,
    RoutingRow,
    WorklistEntry,
)
from services.stats.schemas import GRADE_GROUP_SCALE
from services.stats.service import pairwise_kappa

logger = logging.getLogger(__name__)

READS_PER_CASE = 3

# Statuses reported for each round, in output order.
ROUTING_STATUSES = {
    1: [
        CaseStatus.CONSENSUS_FULL,
        CaseStatus.CONSENSUS_MAJORITY,
        CaseStatus.NEEDS_ROUND2,
        CaseStatus.NEEDS_MEETING,
        CaseStatus.EXCLUDED,
    ],
    2: [CaseStatus.CONSENSUS_MAJORITY, CaseStatus.NEEDS_MEETING],
    3: [CaseStatus.FINAL],
}

Decision = Tuple[CaseStatus, Optional[Verdict], Optional[str]]


def _pattern_pair(verdict: Verdict) -> Tuple[int, int]:
    return verdict.score.primary, verdict.score.secondary


def _decide(reads: Sequence[Read], ihc: Optional[IhcRecord]) -> Decision:
    """Round-1 rules over three reads ordered by reader id."""
    if any(r.ungradeable for r in reads):
        return CaseStatus.EXCLUDED, None, None

    if ihc is not None:
        contradicting = [r for r in reads if r.verdict.malignant != ihc.malignant]
        if len(contradicting) == 1:
            return CaseStatus.NEEDS_ROUND2, None, contradicting[0].reader_id
        if contradicting:
            return CaseStatus.NEEDS_MEETING, None, None
    else:
        malignant = [r for r in reads if r.verdict.malignant]
        if len(malignant) in (1, 2):
            minority_is_malignant = len(malignant) == 1
            minority = next(r for r in reads if r.verdict.malignant == minority_is_malignant)
            return CaseStatus.NEEDS_ROUND2, None, minority.reader_id

    if not reads[0].verdict.malignant:
        return CaseStatus.CONSENSUS_FULL, Verdict.benign(), None

    groups = [r.verdict.grade_group for r in reads]
    pairs = [_pattern_pair(r.verdict) for r in reads]
    if len(set(groups)) == 1:
        if len(set(pairs)) == 1:
            return CaseStatus.CONSENSUS_FULL, Verdict.of(*pairs[0]), None
        pair, count = Counter(pairs).most_common(1)[0]
        if count >= 2:
            return CaseStatus.CONSENSUS_MAJORITY, Verdict.of(*pair), None
        return CaseStatus.NEEDS_MEETING, None, None

    group, count = Counter(groups).most_common(1)[0]
    if count == 2:
        majority = [r for r in reads if r.verdict.grade_group == group]
        dissenter = next(r for r in reads if r.verdict.grade_group != group)
        if _pattern_pair(majority[0].verdict) != _pattern_pair(majority[1].verdict):
            return CaseStatus.NEEDS_ROUND2, None, dissenter.reader_id
        if abs(int(dissenter.verdict.grade_group) - int(group)) == 1:
            return (
                CaseStatus.CONSENSUS_MAJORITY,
                Verdict.of(*_pattern_pair(majority[0].verdict)),
                None,
            )
        return CaseStatus.NEEDS_ROUND2, None, dissenter.reader_id
    return CaseStatus.NEEDS_MEETING, None, None


def round1(reads: Sequence[Read], ihc: Optional[IhcRecord] = None) -> CaseState:
    """
    Decide a case from its three independent first-round reads.
    :param reads: Exactly three round-1 reads of one case by distinct readers.
    :param ihc: IHC result for the case, if any.
    :return: Case state after Round 1.
    :raises: WrongReadCount, DuplicateReader.
    """
    if len(reads) != READS_PER_CASE or any(r.round != 1 for r in reads):
        raise WrongReadCount(
            f"Round 1 needs exactly {READS_PER_CASE} round-1 reads, got {len(reads)}"
        )
    case_ids = {r.case_id for r in reads}
    if len(case_ids) != 1:
        raise WrongReadCount(f"Reads span several cases: {sorted(case_ids)}")
    readers = [r.reader_id for r in reads]
    if len(set(readers)) != len(readers):
        raise DuplicateReader(f"Case {reads[0].case_id}: a reader read the case twice")
    ordered = sorted(reads, key=lambda r: r.reader_id)
    status, verdict, dissenter = _decide(ordered, ihc)
    return CaseState(
        case_id=ordered[0].case_id,
        status=status,
        verdict=verdict,
        dissenter=dissenter,
        reads=ordered,
        ihc=ihc,
        history=[HistoryEntry(round=1, status=status, dissenter=dissenter)],
    )


def _reject_flags(read: Read) -> None:
    if read.flags:
        raise FlagsNotAllowed(
            f"Case {read.case_id}: reader {read.reader_id} set flags in round {read.round}"
        )


def round2(state: CaseState, updated: Read) -> CaseState:
    """
    Replace the dissenter's read and decide again.
    :param state: A case waiting for Round 2.
    :param updated: The dissenter's round-2 read.
    :return: ConsensusMajority if the rules now agree, NeedsMeeting otherwise.
    :raises: WrongState, WrongReader, FlagsNotAllowed.
    """
    if state.status != CaseStatus.NEEDS_ROUND2:
        raise WrongState(f"Case {state.case_id} is {state.status.value}, not waiting for round 2")
    if updated.round != 2:
        raise WrongState(
            f"Case {state.case_id}: expected a round-2 read, got round {updated.round}"
        )
    if updated.reader_id != state.dissenter:
        raise WrongReader(
            f"Case {state.case_id}: round 2 belongs to {state.dissenter}, not {updated.reader_id}"
        )
    _reject_flags(updated)
    reads = [updated if r.reader_id == updated.reader_id else r for r in state.reads]
    status, verdict, _ = _decide(reads, state.ihc)
    if status in (CaseStatus.CONSENSUS_FULL, CaseStatus.CONSENSUS_MAJORITY):
        status = CaseStatus.CONSENSUS_MAJORITY
    else:
        status, verdict = CaseStatus.NEEDS_MEETING, None
    return state.model_copy(
        update={
            "status": status,
            "verdict": verdict,
            "dissenter": None,
            "reads": reads,
            "history": state.history + [HistoryEntry(round=2, status=status)],
        }
    )


def round3(state: CaseState, adjudication: Read) -> CaseState:
    """
    Record the meeting's verdict.
    :raises: WrongState unless the case waits for the meeting, FlagsNotAllowed.
    """
    if state.status != CaseStatus.NEEDS_MEETING:
        raise WrongState(f"Case {state.case_id} is {state.status.value}, not waiting for a meeting")
    if adjudication.round != 3:
        raise WrongState(
            f"Case {state.case_id}: expected a round-3 read, got round {adjudication.round}"
        )
    _reject_flags(adjudication)
    return state.model_copy(
        update={
            "status": CaseStatus.FINAL,
            "verdict": adjudication.verdict,
            "history": state.history + [HistoryEntry(round=3, status=CaseStatus.FINAL)],
        }
    )


def _index_ihc(ihc: Iterable[IhcRecord]) -> Dict[str, IhcRecord]:
    by_case: Dict[str, IhcRecord] = {}
    for record in ihc:
        if record.case_id in by_case:
            raise DuplicateIhc(f"Case {record.case_id} has more than one IHC record")
        by_case[record.case_id] = record
    return by_case


def replay_case(case_reads: Sequence[Read], ihc: Optional[IhcRecord] = None) -> CaseState:
    """
    Drive one case through as many rounds as its recorded reads allow.
    :raises: WrongState for reads of a round the case never reached, plus
        everything the round operations raise.
    """
    by_round = defaultdict(list)
    for read in case_reads:
        by_round[read.round].append(read)
    state = round1(by_round[1], ihc)
    if by_round[2]:
        if len(by_round[2]) > 1:
            raise WrongReadCount(f"Case {state.case_id}: more than one round-2 read")
        state = round2(state, by_round[2][0])
    if by_round[3]:
        if len(by_round[3]) > 1:
            raise WrongReadCount(f"Case {state.case_id}: more than one round-3 read")
        state = round3(state, by_round[3][0])
    return state


def _routing(states: Sequence[CaseState]) -> List[RoutingRow]:
    counts = Counter((h.round, h.status) for s in states for h in s.history)
    total = len(states)
    rows = []
    for round_, statuses in ROUTING_STATUSES.items():
        for status in statuses:
            count = counts[(round_, status)]
            rows.append(
                RoutingRow(
                    round=round_,
                    status=status,
                    count=count,
                    percent=100.0 * count / total if total else 0.0,
                )
            )
    return rows


def round1_agreement(first_round: Iterable[Sequence[Read]]) -> Optional[float]:
    """
    Mean pairwise quadratic kappa of the first-round grade groups, over the
    gradeable cases read by the most common trio of readers.
    """
    gradeable = [
        reads
        for reads in first_round
        if len(reads) == READS_PER_CASE and not any(r.ungradeable for r in reads)
    ]
    if not gradeable:
        return None
    trios = Counter(tuple(sorted(r.reader_id for r in reads)) for reads in gradeable)
    trio = trios.most_common(1)[0][0]
    raters: Dict[str, List[int]] = {reader: [] for reader in trio}
    for reads in gradeable:
        if tuple(sorted(r.reader_id for r in reads)) == trio:
            for r in reads:
                raters[r.reader_id].append(r.verdict.grade_group_label)
    return pairwise_kappa(raters, GRADE_GROUP_SCALE).mean_pairwise


def run_protocol(
    reads: Iterable[Read], ihc: Iterable[IhcRecord] = (), isolate_failures: bool = False
) -> ProtocolResult:
    """
    Run every case through the protocol.
    :param reads: All recorded reads of all rounds.
    :param ihc: IHC results, at most one per case.
    :param isolate_failures: Leave out, log and list the cases whose reads the
        protocol rejects instead of raising on the first one.
    :return: Case states sorted by case id, the reference standard of the
        terminal cases, per-round routing counts and the worklist of cases
        still waiting for Round 2 or the meeting.
    :raises: DuplicateIhc and whatever the round operations raise.
    """
    ihc_by_case = _index_ihc(ihc)
    by_case: Dict[str, List[Read]] = defaultdict(list)
    for read in reads:
        by_case[read.case_id].append(read)
    states: List[CaseState] = []
    failed: List[CaseFailure] = []
    for case_id in sorted(by_case):
        try:
            states.append(replay_case(by_case[case_id], ihc_by_case.get(case_id)))
        except InvariantViolation:
            raise
        except GleasonEngineError as e:
            if not isolate_failures:
                raise
            logger.error(f"Case {case_id} left out of the protocol: {e.detail}")
            failed.append(CaseFailure(case_id=case_id, detail=e.detail))

    reference = [
        ReferenceEntry(case_id=s.case_id, status=s.status, verdict=s.verdict)
        for s in states
        if s.is_terminal
    ]
    worklist = [
        WorklistEntry(case_id=s.case_id, status=s.status, dissenter=s.dissenter)
        for s in states
        if not s.is_terminal
    ]
    logger.info(
        f"Consensus over {len(states)} cases: {len(reference)} terminal, "
        f"{len(worklist)} waiting"
    )
    return ProtocolResult(
        states=states,
        reference=reference,
        routing=_routing(states),
        worklist=worklist,
        round1_mean_kappa=round1_agreement(
            [r for r in by_case[s.case_id] if r.round == 1] for s in states
        ),
        failed=failed,
    )
