from typing import List

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy.orm import Session

from services.consensus.schemas import (
    CaseState,
    IhcOut,
    IhcRecord,
    ReadIn,
    ReadOut,
    ReferenceEntry,
    WorklistEntry,
)
from services.consensus.store import add_ihc, add_read, case_state, protocol
from services.database import get_db
from services.security import require_api_key

consensus_router = APIRouter(prefix="/consensus", tags=["consensus"])


@consensus_router.post(
    "/reads", response_model=ReadOut, status_code=status.HTTP_201_CREATED
)
def add_read_endpoint(
    payload: ReadIn,
    db: Session = Depends(get_db),
    api_key: str = Depends(require_api_key),
) -> ReadOut:
    return add_read(db, payload)


@consensus_router.post("/ihc", response_model=IhcOut, status_code=status.HTTP_201_CREATED)
def add_ihc_endpoint(
    payload: IhcRecord,
    db: Session = Depends(get_db),
    api_key: str = Depends(require_api_key),
) -> IhcOut:
    return add_ihc(db, payload)


@consensus_router.get("/cases/{case_id}", response_model=CaseState)
def get_case_endpoint(case_id: str, db: Session = Depends(get_db)) -> CaseState:
    state = case_state(db, case_id)
    if state is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Case not found")
    return state


@consensus_router.get("/worklist", response_model=List[WorklistEntry])
def worklist_endpoint(db: Session = Depends(get_db)) -> List[WorklistEntry]:
    return protocol(db).worklist


@consensus_router.get("/reference", response_model=List[ReferenceEntry])
def reference_endpoint(db: Session = Depends(get_db)) -> List[ReferenceEntry]:
    return protocol(db).reference
