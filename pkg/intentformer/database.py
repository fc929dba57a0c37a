# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Thin sqlite3 layer used for checkpoints: create a file from DatabaseTable
descriptions in one transaction, tag it with a format version, read it back.
"""

from __future__ import print_function, division, absolute_import

import logging
import sqlite3

from typechecks import require_integer, require_string, require_iterable_of


logger = logging.getLogger(__name__)

METADATA_TABLE_NAME = "_intentformer_metadata"


def column_declaration(column_name, column_type, primary=None, nullable=()):
    """e.g. ("name", "TEXT") -> "name TEXT UNIQUE PRIMARY KEY NOT NULL" """
    parts = [column_name, column_type]
    if column_name == primary:
        parts.append("UNIQUE PRIMARY KEY")
    if column_name not in nullable:
        parts.append("NOT NULL")
    return " ".join(parts)


def create_table_statement(table):
    require_string(table.name, "table name")
    require_iterable_of(table.column_types, tuple, name="column_types")
    require_iterable_of(table.nullable, str, name="nullable")
    if table.primary_key is not None:
        require_string(table.primary_key, "primary_key")
    declarations = [
        column_declaration(name, column_type, table.primary_key, table.nullable)
        for name, column_type in table.column_types
    ]
    return "CREATE TABLE %s (%s)" % (table.name, ", ".join(declarations))


class Database(object):
    """
    One sqlite3 file. Usable as a context manager; leaving the block
    commits and closes the connection.
    """
    def __init__(self, path):
        self.path = path
        self.connection = sqlite3.connect(path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()
        return False

    def close(self):
        self.connection.commit()
        self.connection.close()

    def table_names(self):
        cursor = self.connection.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name")
        return [name for (name,) in cursor.fetchall()]

    def has_table(self, table_name):
        return table_name in self.table_names()

    def has_tables(self, table_names):
        present = set(self.table_names())
        return all(name in present for name in table_names)

    def has_version(self):
        """
        The metadata table is written last, so a file without it was
        either not written by intentformer or never finished.
        """
        return self.has_table(METADATA_TABLE_NAME)

    def version(self):
        row = self.connection.execute(
            "SELECT version FROM %s" % METADATA_TABLE_NAME).fetchone()
        return int(row[0]) if row else 0

    def _insert_rows(self, table_name, rows):
        if not rows:
            return
        placeholders = ", ".join(["?"] * len(rows[0]))
        logger.debug("Inserting %d rows into table %s", len(rows), table_name)
        self.connection.executemany(
            "INSERT INTO %s VALUES (%s)" % (table_name, placeholders), rows)

    def create(self, tables, version):
        """
        Create and fill every table, then write the metadata table holding
        `version`. Nothing is written when a table's rows don't match its
        columns.

        Parameters
        ----------
        tables : list of DatabaseTable

        version : int
            Format version of the file being written
        """
        require_integer(version, "version")
        # sqlite3 commits DDL immediately, so check everything first
        statements = []
        for table in tables:
            rows = table.rows
            require_iterable_of(rows, tuple, "rows")
            width = len(table.column_types)
            if any(len(row) != width for row in rows):
                raise ValueError(
                    "Rows of table %s must all have %d values" % (table.name, width))
            statements.append((create_table_statement(table), table.name, rows))
        with self.connection:
            for create_sql, table_name, rows in statements:
                self.connection.execute(create_sql)
                self._insert_rows(table_name, rows)
            self.connection.execute(
                "CREATE TABLE %s (version INT NOT NULL)" % METADATA_TABLE_NAME)
            self.connection.execute(
                "INSERT INTO %s VALUES (?)" % METADATA_TABLE_NAME, (version,))
        logger.debug(
            "Created %s with tables %s (version %d)",
            self.path, [table.name for table in tables], version)

    def select(self, table_name, columns, order_by=None):
        """All rows of `columns` from a table, optionally ordered"""
        require_string(table_name, "table_name")
        if not self.has_table(table_name):
            raise ValueError(
                "Table '%s' does not exist in database" % (table_name,))
        sql = "SELECT %s FROM %s" % (", ".join(columns), table_name)
        if order_by:
            sql += " ORDER BY %s" % order_by
        return self.connection.execute(sql).fetchall()
