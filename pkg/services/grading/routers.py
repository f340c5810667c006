import tempfile
from pathlib import Path

from fastapi import APIRouter, File, Form, UploadFile

from services.grading.schemas import (
    DiagnoseRequest,
    Diagnosis,
    MaskDiagnosisOut,
    ThresholdProfile,
)
from services.exceptions import UnknownProfile
from services.grading.service import PROFILES, diagnose, volume_profile
from services.raster.pgm import read_pgm
from services.raster.service import class_areas

grading_router = APIRouter(prefix="/grading", tags=["grading"])


def _shipped_profile(name: str) -> ThresholdProfile:
    # only shipped profiles are served over HTTP
    if name not in PROFILES:
        raise UnknownProfile(f"Unknown threshold profile: {name}")
    return PROFILES[name]


@grading_router.post("/diagnose", response_model=Diagnosis)
def diagnose_endpoint(payload: DiagnoseRequest) -> Diagnosis:
    return diagnose(payload.profile, _shipped_profile(payload.profile_name))


@grading_router.post("/masks", response_model=MaskDiagnosisOut)
def grade_mask_endpoint(
    case_id: str = Form(...),
    profile_name: str = Form("biopsy"),
    mask: UploadFile = File(...),
) -> MaskDiagnosisOut:
    profile = _shipped_profile(profile_name)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "mask.pgm"
        path.write_bytes(mask.file.read())
        m = read_pgm(path)
    vp = volume_profile(class_areas(m))
    return MaskDiagnosisOut(case_id=case_id, volume_profile=vp, diagnosis=diagnose(vp, profile))


@grading_router.get("/profiles/{name}", response_model=ThresholdProfile)
def get_profile_endpoint(name: str) -> ThresholdProfile:
    return _shipped_profile(name)
