from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker, declarative_base
from sqlalchemy.exc import SQLAlchemyError
import logging

from utils.errors import DatabaseError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)
logging.getLogger('sqlalchemy.engine').setLevel(logging.WARNING)

# Default SQLite file for benchmark runs, relative to the working directory.
DATABASE_URL = "sqlite:///./bench_runs.db"

# Base class for declarative models.
Base = declarative_base()


def get_engine(url: str = DATABASE_URL) -> Engine:
    """
    Creates a SQLAlchemy engine for the given URL.

    :param url: Database URL, e.g. `sqlite:///bench.db`.
    :return: Engine; SQLite engines allow use across threads.
    """
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def get_session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db(engine: Engine):
    """
    Yields a database session and closes it afterwards, rolling back on database errors.
    """
    db = get_session_factory(engine)()
    try:
        yield db
    except SQLAlchemyError as e:
        db.rollback()
        logger.error(f"Database error occurred: {e}")
        raise
    finally:
        db.close()


def create_db_tables(engine: Engine) -> None:
    """
    Creates all tables defined by models inheriting from Base (idempotent).

    :raises DatabaseError: If the tables cannot be created.
    """
    # models must be imported so their tables are registered on Base
    from database import models  # noqa: F401
    try:
        Base.metadata.create_all(bind=engine)
        logger.info("Database tables created successfully or already exist.")
    except SQLAlchemyError as e:
        raise DatabaseError("Error creating database tables.", original_error=e)
