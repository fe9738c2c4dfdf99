"""
Run ledger models
"""
from sqlalchemy import Column, DateTime, Float, Integer, String
from sqlalchemy.sql import func

from tsr.database import Base


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False)
    master_seed = Column(Integer, nullable=False)
    target = Column(String, nullable=True)
    status = Column(String, nullable=False)
    exit_code = Column(Integer, nullable=False)
    energy_start = Column(Float, nullable=True)
    energy_final = Column(Float, nullable=True)
    accepted_steps = Column(Integer, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "command": self.command,
            "master_seed": self.master_seed,
            "target": self.target,
            "status": self.status,
            "exit_code": self.exit_code,
            "energy_start": self.energy_start,
            "energy_final": self.energy_final,
            "accepted_steps": self.accepted_steps,
        }

    def __repr__(self):
        return f"<RunRecord {self.id}: {self.command} {self.status}>"
