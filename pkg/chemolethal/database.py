from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

from .settings import get_settings

DATABASE_URL = get_settings().database_url

# Check if the URL is an SQLite URL
if DATABASE_URL.startswith("sqlite"):
    options = {"connect_args": {"check_same_thread": False}}
    if DATABASE_URL in ("sqlite://", "sqlite:///:memory:"):
        # one shared connection keeps an in-memory database alive across sessions
        options["poolclass"] = StaticPool
    engine = create_engine(DATABASE_URL, **options)
else:
    engine = create_engine(DATABASE_URL)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


def get_db():
    """
    Dependency to get a database session.

    Yields:
        Session: A SQLAlchemy session.
    """
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
