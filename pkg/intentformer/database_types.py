# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Map Python and numpy types to sqlite3 column types"""

from __future__ import print_function, division, absolute_import

_db_type_names = {
    'INT': (
        'int', 'int8', 'int16', 'int32', 'int64',
        'uint8', 'uint16', 'uint32', 'uint64', 'bool',
    ),
    'FLOAT': ('float', 'float32', 'float64'),
    'TEXT': ('str', 'object', 'object_', 'str_', 'unicode'),
    'BLOB': ('bytes', 'bytes_', 'bytearray', 'memoryview'),
}

_type_name_to_db_type = {
    type_name: db_type_name
    for db_type_name, type_names in _db_type_names.items()
    for type_name in type_names
}


def _candidate_type_names(type_representation):
    """
    Names under which a type might be listed: dtype name, class name,
    name of the dtype's scalar type, then str().
    """
    if hasattr(type_representation, 'name'):
        yield type_representation.name
    if hasattr(type_representation, '__name__'):
        yield type_representation.__name__
    scalar_type = getattr(type_representation, 'type', None)
    if hasattr(scalar_type, '__name__'):
        yield scalar_type.__name__
    yield str(type_representation)


def db_type(type_representation):
    """
    sqlite3 column type for a Python type, a numpy dtype or a type name,
    e.g. int -> INT, np.dtype('float64') -> FLOAT, bytes -> BLOB.
    """
    for type_name in _candidate_type_names(type_representation):
        if type_name in _type_name_to_db_type:
            return _type_name_to_db_type[type_name]
    raise ValueError(
        "Failed to find sqlite3 column type for %s" % (type_representation,))
