from contextlib import contextmanager
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.engine import make_url
from sqlalchemy.orm import declarative_base, sessionmaker

from app.config.settings import settings

Base = declarative_base()
"""
SQLAlchemy declarative base class for the run-registry models.

Every registry table (runs and their metrics) inherits from this base, so a
single ``Base.metadata.create_all`` call creates the whole schema on a new
database.
"""

_engines = {}


def get_engine(url=None):
    """
    Return the SQLAlchemy engine of a registry database, creating it on first use.

    Engines are created lazily and cached per URL, so importing the package
    never touches a database and tests can point the registry at a temporary
    file. For SQLite URLs the parent directory of the database file is created
    and the registry tables are created if they do not exist yet.

    Args:
        url (str | None): SQLAlchemy database URL. Defaults to
            ``settings.DATABASE_URL`` (a SQLite file inside the runs directory).

    Returns:
        Engine: The cached engine for ``url``.

    Example:
        engine = get_engine("sqlite:///runs/registry.db")
    """
    import app.database.models  # noqa: F401  registers the tables on Base

    url = url or settings.DATABASE_URL
    if url not in _engines:
        parsed = make_url(url)
        if parsed.get_backend_name() == "sqlite" and parsed.database not in (None, "", ":memory:"):
            Path(parsed.database).parent.mkdir(parents=True, exist_ok=True)
        engine = create_engine(url)
        Base.metadata.create_all(bind=engine)
        _engines[url] = engine
    return _engines[url]


@contextmanager
def session_scope(url=None):
    """
    Provide a transactional session around a block of registry operations.

    The session commits when the block exits normally, rolls back when it
    raises and is always closed afterwards.

    Args:
        url (str | None): Registry database URL, see ``get_engine``.

    Yields:
        Session: A SQLAlchemy session bound to the registry engine.

    Example:
        with session_scope() as db:
            failed = db.query(RunRecord).filter(RunRecord.status == "failed").all()
    """
    factory = sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))
    db = factory()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
