from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from services import __version__
from services.consensus import models  # noqa: F401  registers the tables
from services.consensus.routers import consensus_router
from services.database import Base, engine
from services.exceptions import GleasonEngineError
from services.grading.routers import grading_router


@asynccontextmanager
async def lifespan(app: FastAPI):
    Base.metadata.create_all(bind=engine)
    yield


app = FastAPI(
    title="Gleason Grading Engine",
    version=__version__,
    lifespan=lifespan,
    redirect_slashes=False,
)

app.include_router(grading_router)
app.include_router(consensus_router)


@app.exception_handler(GleasonEngineError)
async def engine_error_handler(request: Request, exc: GleasonEngineError) -> JSONResponse:
    return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})


@app.get("/health", include_in_schema=False)
def health() -> dict:
    return {"status": "ok", "version": __version__}
