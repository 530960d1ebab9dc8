from sqlalchemy import JSON, Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func
from .database import Base
import uuid


class SimulationRun(Base):
    __tablename__ = "simulation_runs"

    id = Column(String, primary_key=True, default=lambda: str(uuid.uuid4()))
    kind = Column(String, index=True, default="simulate")
    status = Column(String, default="running")
    exit_code = Column(Integer, nullable=True)
    config = Column(JSON)
    output_dir = Column(String, nullable=True)
    fitted_rate = Column(Float, nullable=True)
    final_dist_inf = Column(Float, nullable=True)
    outcome = Column(String, nullable=True)
    detail = Column(Text, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    finished_at = Column(DateTime(timezone=True), nullable=True)


class Sweep(Base):
    __tablename__ = "sweeps"

    id = Column(String, primary_key=True, default=lambda: str(uuid.uuid4()))
    status = Column(String, default="running")
    spec = Column(JSON)
    point_count = Column(Integer, default=0)
    phase_path = Column(String, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    finished_at = Column(DateTime(timezone=True), nullable=True)

    # Relationship to phase points
    points = relationship("PhasePointRow", back_populates="sweep", order_by="PhasePointRow.index")


class PhasePointRow(Base):
    __tablename__ = "phase_points"

    id = Column(Integer, primary_key=True, index=True)
    sweep_id = Column(String, ForeignKey("sweeps.id"), index=True)
    index = Column("point_index", Integer)
    coordinates = Column(JSON)
    gate_pass = Column(Boolean)
    outcome = Column(String)
    fitted_rate = Column(Float, nullable=True)
    final_dist_inf = Column(Float, nullable=True)
    bounded = Column(Boolean, nullable=True)
    detail = Column(Text, default="")

    sweep = relationship("Sweep", back_populates="points")
