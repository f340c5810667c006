import secrets

from fastapi import Header, HTTPException, status

from services.config import get_settings


def require_api_key(x_api_key: str | None = Header(default=None)) -> str:
    """Guard write endpoints with the shared key from the ``x-api-key`` header."""
    expected = get_settings().API_KEY
    if not x_api_key or not secrets.compare_digest(x_api_key, expected):
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid or missing API key",
        )
    return x_api_key
