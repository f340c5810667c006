from sqlalchemy import Boolean, Column, Float, Integer, String, UniqueConstraint
from services.database import Base


class ReadRecord(Base):
    __tablename__ = "reads"
    __table_args__ = (
        UniqueConstraint("case_id", "reader_id", "round", name="uq_read_case_reader_round"),
    )

    id = Column(Integer, primary_key=True, index=True)
    case_id = Column(String(255), nullable=False, index=True)
    reader_id = Column(String(255), nullable=False, index=True)
    round = Column(Integer, nullable=False)
    malignant = Column(Boolean, nullable=True)
    primary = Column(Integer, nullable=True)
    secondary = Column(Integer, nullable=True)
    tertiary = Column(Integer, nullable=True)
    tumor_volume_estimate = Column(Float, nullable=True)
    ungradeable = Column(Boolean, default=False, nullable=False)


class IhcResult(Base):
    __tablename__ = "ihc_results"

    id = Column(Integer, primary_key=True, index=True)
    case_id = Column(String(255), nullable=False, unique=True, index=True)
    malignant = Column(Boolean, nullable=False)
