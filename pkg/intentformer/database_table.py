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

from .database_types import db_type


class DatabaseTable(object):
    """Column layout and rows of one sqlite3 table"""

    def __init__(
            self,
            name,
            column_types,
            make_rows,
            nullable=(),
            primary_key=None):
        self.name = name
        self.column_types = column_types
        self.make_rows = make_rows
        self.nullable = set(nullable)
        self.primary_key = primary_key

    @property
    def rows(self):
        """Delay constructing list of row tuples"""
        return self.make_rows()

    @classmethod
    def from_records(cls, name, columns, records, primary_key=None):
        """
        Infer column types from the Python values of the first record.

        Parameters
        ----------
        columns : list of str

        records : list of tuples
            Every record has one value per column; at least one record
            is needed to infer the types.
        """
        records = [tuple(record) for record in records]
        assert records, "Cannot infer column types of table %s without rows" % name
        assert all(len(r) == len(columns) for r in records), \
            "Records of table %s must have %d values" % (name, len(columns))
        column_types = [
            (column, db_type(type(value)))
            for column, value in zip(columns, records[0])
        ]
        return cls(
            name=name,
            column_types=column_types,
            make_rows=lambda: list(records),
            primary_key=primary_key)
