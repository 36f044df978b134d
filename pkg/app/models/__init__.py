# app/models/__init__.py
# Importing the job table registers it on Base.metadata for create_db_tables().
from app.models.base import Base
from app.models.job import SolveJob
