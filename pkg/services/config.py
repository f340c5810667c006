import os
from functools import lru_cache
from dotenv import load_dotenv

load_dotenv()


class Settings:
    def __init__(self) -> None:
        self.THREADS = max(1, int(os.getenv("GLEASON_ENGINE_THREADS", "1")))
        self.TILE_ROWS = int(os.getenv("GLEASON_ENGINE_TILE_ROWS", "1024"))
        self.REPLICATES = int(os.getenv("GLEASON_ENGINE_REPLICATES", "1000"))
        self.ITERATIONS = int(os.getenv("GLEASON_ENGINE_ITERATIONS", "10000"))
        self.LOG_LEVEL = os.getenv("GLEASON_ENGINE_LOG_LEVEL", "INFO")
        self.DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///gleason_reads.db")
        self.API_KEY = os.getenv("API_KEY", "local-dev-api-key")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
