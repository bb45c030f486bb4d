"""Database setup for the run ledger.

The URL comes from ``HYPMETRICS_DATABASE_URL``; the default is an absolute
path to the project-root ``runs.db`` so launching from another working
directory does not create a second SQLite file.
"""

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from .settings import SETTINGS

DATABASE_URL = SETTINGS.database_url

_connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}
engine = create_engine(DATABASE_URL, connect_args=_connect_args)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()
