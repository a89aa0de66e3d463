from typing import Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.sql import func

Base = declarative_base()


class RunRecord(Base):

    __tablename__ = "runs"

    id: int = Column(Integer, primary_key=True, index=True)
    command: str = Column(String(50), nullable=False)
    group_digest: Optional[str] = Column(String(64), nullable=True)
    config_json: Optional[str] = Column(Text, nullable=True)
    seed: Optional[int] = Column(Integer, nullable=True)
    tool_version: str = Column(String(20), nullable=False)
    exit_code: int = Column(Integer, nullable=False)
    wall_time: Optional[float] = Column(Float, nullable=True)
    created_at: DateTime = Column(DateTime(timezone=True), server_default=func.now())
    updated_at: DateTime = Column(
        DateTime(timezone=True), server_default=func.now(), onupdate=func.now()
    )

    def __repr__(self) -> str:
        return (
            f"<RunRecord(id={self.id}, command='{self.command}', "
            f"exit_code={self.exit_code})>"
        )
