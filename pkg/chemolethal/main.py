import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from . import models
from .database import engine
from .routers import api
from .settings import get_settings

logger = logging.getLogger(__name__)

# Create database tables
models.Base.metadata.create_all(bind=engine)

app = FastAPI(
    title="Chemolethal",
    description="Simulation and verification service for lethal-interaction chemotaxis",
    version="1.0.0",
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(api.router, prefix="/api", tags=["api"])


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "Chemolethal simulation service",
        "documentation": "/docs",
        "endpoints": [
            "/api/gates",
            "/api/equilibria",
            "/api/runs",
            "/api/runs/{run_id}",
            "/api/sweeps",
            "/api/sweeps/{sweep_id}",
            "/api/sweeps/{sweep_id}/points",
            "/api/registry",
        ],
    }


@app.on_event("startup")
async def startup_event():
    settings = get_settings()
    logging.basicConfig(level=settings.log_level.upper())
    logger.info("starting chemolethal service, outputs under %s", settings.output_root)


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("shutting down chemolethal service")
