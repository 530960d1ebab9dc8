from pathlib import Path

from fastapi import Depends, HTTPException, status

from .run_manager import RunManager, manager
from .settings import Settings, get_settings


def get_run_manager() -> RunManager:
    """Dependency returning the process-wide run registry"""
    return manager


def get_output_root(settings: Settings = Depends(get_settings)) -> Path:
    """Directory under which REST-submitted runs write their files"""
    root = Path(settings.output_root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"Output root {root} is not writable: {exc}",
        )
    return root
