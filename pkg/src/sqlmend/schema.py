"""Database schema catalogs: Spider ``tables.json`` loading, SQLite
introspection, and rendering to the ``CREATE TABLE`` text block that every
prompt embeds.

Catalogs are treated as immutable after construction and are safe to share
across worker threads.
"""

from __future__ import annotations

import json
import re
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DatabaseOpenError, MalformedDatasetError, SchemaIntegrityError

_BARE_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class ColumnDef:
    name: str
    data_type: str


@dataclass
class ForeignKey:
    column: str
    foreign_table: str
    foreign_column: str


@dataclass
class TableDef:
    name: str
    columns: list[ColumnDef]
    primary_key: list[str] = field(default_factory=list)
    foreign_keys: list[ForeignKey] = field(default_factory=list)

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def find_column(self, name: str) -> ColumnDef | None:
        lowered = name.lower()
        for col in self.columns:
            if col.name.lower() == lowered:
                return col
        return None


@dataclass
class SchemaCatalog:
    """One database's tables plus optional path to its SQLite file."""

    db_id: str
    tables: list[TableDef]
    source_path: Path | None = None

    def __post_init__(self):
        self.validate()
        self._table_index = {t.name.lower(): t for t in self.tables}
        self._column_index: dict[str, str] = {}
        for table in self.tables:
            for col in table.columns:
                self._column_index.setdefault(col.name.lower(), col.name)

    def validate(self) -> None:
        if not self.db_id:
            raise SchemaIntegrityError("db_id must be non-empty")
        seen_tables: set[str] = set()
        for table in self.tables:
            key = table.name.lower()
            if key in seen_tables:
                raise SchemaIntegrityError(
                    f"{self.db_id}: duplicate table name {table.name!r}"
                )
            seen_tables.add(key)
            seen_cols: set[str] = set()
            for col in table.columns:
                if not col.name:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: empty column name"
                    )
                ckey = col.name.lower()
                if ckey in seen_cols:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: duplicate column {col.name!r}"
                    )
                seen_cols.add(ckey)
            for pk in table.primary_key:
                if table.find_column(pk) is None:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: primary key column {pk!r} missing"
                    )
            for fk in table.foreign_keys:
                if table.find_column(fk.column) is None:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: foreign key column {fk.column!r} missing"
                    )
        # Foreign-key targets must resolve within the catalog.
        names = {t.name.lower(): t for t in self.tables}
        for table in self.tables:
            for fk in table.foreign_keys:
                target = names.get(fk.foreign_table.lower())
                if target is None:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: foreign key targets unknown "
                        f"table {fk.foreign_table!r}"
                    )
                if target.find_column(fk.foreign_column) is None:
                    raise SchemaIntegrityError(
                        f"{self.db_id}.{table.name}: foreign key targets unknown "
                        f"column {fk.foreign_table}.{fk.foreign_column}"
                    )

    def find_table(self, name: str) -> TableDef | None:
        """Case-insensitive lookup returning the canonically cased table."""
        return self._table_index.get(name.lower())

    def canonical_column(self, name: str) -> str | None:
        """Canonical casing of a column name appearing anywhere in the catalog."""
        return self._column_index.get(name.lower())

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]


def _render_identifier(name: str) -> str:
    if _BARE_IDENTIFIER.match(name):
        return name
    return '"' + name.replace('"', '""') + '"'


def render_schema_prompt(catalog: SchemaCatalog) -> str:
    """Render a catalog as one single-line ``CREATE TABLE`` statement per
    table, in catalog order, separated by a blank line.

    The output is byte-for-byte deterministic for a given catalog; type
    names are uppercased, identifier casing is preserved.
    """
    statements = []
    for table in catalog.tables:
        parts = [
            f"{_render_identifier(col.name)} {col.data_type.upper()}"
            for col in table.columns
        ]
        if table.primary_key:
            keys = ", ".join(_render_identifier(c) for c in table.primary_key)
            parts.append(f"PRIMARY KEY ({keys})")
        for fk in table.foreign_keys:
            parts.append(
                f"FOREIGN KEY ({_render_identifier(fk.column)}) REFERENCES "
                f"{_render_identifier(fk.foreign_table)} ({_render_identifier(fk.foreign_column)})"
            )
        statements.append(
            f"CREATE TABLE {_render_identifier(table.name)} ({', '.join(parts)});"
        )
    return "\n\n".join(statements)


def load_tables_json(path: str | Path) -> list[SchemaCatalog]:
    """Load Spider-style ``tables.json`` into one catalog per database.

    The ``*`` pseudo-column (table index -1) is dropped; foreign-key column
    index pairs are resolved to (column, table, column) name triples.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedDatasetError(f"{path}: cannot parse tables.json: {exc}") from exc
    if not isinstance(raw, list):
        raise MalformedDatasetError(f"{path}: expected a top-level array")

    catalogs = []
    for index, entry in enumerate(raw):
        catalogs.append(_catalog_from_entry(entry, index))
    return catalogs


def _catalog_from_entry(entry: object, index: int) -> SchemaCatalog:
    if not isinstance(entry, dict):
        raise MalformedDatasetError(f"entry {index}: expected an object")
    required = (
        "db_id",
        "table_names_original",
        "column_names_original",
        "column_types",
        "primary_keys",
        "foreign_keys",
    )
    for key in required:
        if key not in entry:
            raise MalformedDatasetError(f"entry {index}: missing key {key!r}")

    db_id = entry["db_id"]
    table_names = entry["table_names_original"]
    column_names = entry["column_names_original"]
    column_types = entry["column_types"]
    if len(column_types) != len(column_names):
        raise MalformedDatasetError(
            f"entry {index} ({db_id}): column_types length does not match columns"
        )

    tables: list[TableDef] = [TableDef(name=n, columns=[]) for n in table_names]
    # Position of each column in the original (global) index space, so that
    # primary_keys / foreign_keys indices can be resolved.
    column_owner: dict[int, tuple[int, str]] = {}
    for col_idx, pair in enumerate(column_names):
        try:
            table_idx, col_name = pair
        except (TypeError, ValueError):
            raise MalformedDatasetError(
                f"entry {index} ({db_id}): column entry {col_idx} is not a pair"
            ) from None
        if table_idx == -1:
            continue  # the '*' pseudo-column
        if not 0 <= table_idx < len(tables):
            raise SchemaIntegrityError(
                f"entry {index} ({db_id}): column {col_name!r} names table "
                f"index {table_idx} out of range"
            )
        tables[table_idx].columns.append(
            ColumnDef(name=col_name, data_type=str(column_types[col_idx]))
        )
        column_owner[col_idx] = (table_idx, col_name)

    def resolve(col_idx: object, what: str) -> tuple[int, str]:
        if not isinstance(col_idx, int) or col_idx not in column_owner:
            raise SchemaIntegrityError(
                f"entry {index} ({db_id}): {what} column index {col_idx!r} "
                "does not name a real column"
            )
        return column_owner[col_idx]

    for pk in entry["primary_keys"]:
        members = pk if isinstance(pk, list) else [pk]
        for col_idx in members:
            table_idx, col_name = resolve(col_idx, "primary key")
            tables[table_idx].primary_key.append(col_name)

    for fk_pair in entry["foreign_keys"]:
        try:
            local_idx, foreign_idx = fk_pair
        except (TypeError, ValueError):
            raise MalformedDatasetError(
                f"entry {index} ({db_id}): foreign key entry is not a pair"
            ) from None
        local_table, local_col = resolve(local_idx, "foreign key")
        foreign_table, foreign_col = resolve(foreign_idx, "foreign key")
        tables[local_table].foreign_keys.append(
            ForeignKey(
                column=local_col,
                foreign_table=tables[foreign_table].name,
                foreign_column=foreign_col,
            )
        )

    try:
        return SchemaCatalog(db_id=db_id, tables=tables)
    except SchemaIntegrityError as exc:
        raise SchemaIntegrityError(f"entry {index}: {exc}") from exc


def introspect_sqlite(path: str | Path) -> SchemaCatalog:
    """Build a catalog from a SQLite file's own metadata.

    Internal ``sqlite_*`` tables are excluded; ``db_id`` is the file stem.
    """
    path = Path(path)
    if not path.is_file():
        raise DatabaseOpenError(f"{path}: no such database file")
    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        raise DatabaseOpenError(f"{path}: {exc}") from exc
    try:
        try:
            rows = conn.execute(
                "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY rowid"
            ).fetchall()
        except sqlite3.Error as exc:
            raise DatabaseOpenError(f"{path}: {exc}") from exc
        tables = []
        for (table_name,) in rows:
            if table_name.startswith("sqlite_"):
                continue
            quoted = table_name.replace("'", "''")
            columns = []
            primary_key = []
            for _, name, col_type, _, _, pk_pos in conn.execute(
                f"PRAGMA table_info('{quoted}')"
            ):
                columns.append(ColumnDef(name=name, data_type=col_type or "TEXT"))
                if pk_pos:
                    primary_key.append((pk_pos, name))
            foreign_keys = [
                ForeignKey(column=row[3], foreign_table=row[2], foreign_column=row[4])
                for row in conn.execute(f"PRAGMA foreign_key_list('{quoted}')")
                if row[4] is not None
            ]
            tables.append(
                TableDef(
                    name=table_name,
                    columns=columns,
                    primary_key=[name for _, name in sorted(primary_key)],
                    foreign_keys=foreign_keys,
                )
            )
        return SchemaCatalog(db_id=path.stem, tables=tables, source_path=path)
    finally:
        conn.close()


def load_database_dir(database_dir: str | Path) -> dict[str, Path]:
    """Map db_id -> SQLite path for a ``<dir>/<db_id>/<db_id>.sqlite`` layout."""
    database_dir = Path(database_dir)
    mapping = {}
    if not database_dir.is_dir():
        return mapping
    for child in sorted(database_dir.iterdir()):
        candidate = child / f"{child.name}.sqlite"
        if candidate.is_file():
            mapping[child.name] = candidate
    return mapping
