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

"""
Checkpoints are sqlite3 files with a `config` table of JSON values, a
`parameters` table of float64 little-endian buffers in parameter order,
and the format version in the metadata table.
"""

from __future__ import print_function, division, absolute_import

import json
import logging
from os import remove
import sqlite3
from os.path import exists

import numpy as np
from typechecks import require_string

from .config import ModelConfig
from .database import Database
from .database_table import DatabaseTable
from .errors import ConfigError
from .params import ModelParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

CONFIG_TABLE = "config"
PARAMETERS_TABLE = "parameters"

BUFFER_DTYPE = np.dtype("<f8")


def _config_table(config, extra):
    records = [("model", json.dumps(config.to_dict(), sort_keys=True))]
    for key in sorted(extra or {}):
        if key == "model":
            raise ConfigError("Checkpoint metadata key 'model' is reserved")
        records.append((key, json.dumps(extra[key], sort_keys=True)))
    return DatabaseTable.from_records(
        CONFIG_TABLE, ["key", "value"], records, primary_key="key")


def _parameters_table(params):
    records = [
        (
            position,
            name,
            json.dumps(list(tensor.shape)),
            np.ascontiguousarray(tensor.data, dtype=BUFFER_DTYPE).tobytes(),
        )
        for position, (name, tensor) in enumerate(params.items())
    ]
    return DatabaseTable.from_records(
        PARAMETERS_TABLE,
        ["position", "name", "shape", "data"],
        records,
        primary_key="name")


def save_checkpoint(path, params, config, extra=None):
    """
    Write `params` and `config` to `path`, replacing any existing file.

    Parameters
    ----------
    path : str

    params : ModelParams

    config : ModelConfig

    extra : dict, optional
        JSON-serializable values stored next to the model config
        (training settings, epoch, ...). Defaults to the metadata the
        parameters were loaded with.
    """
    require_string(path, "path")
    params.check_config(config)
    if extra is None:
        extra = params.metadata
    if exists(path):
        remove(path)
    tables = [_config_table(config, extra), _parameters_table(params)]
    db = Database(path)
    try:
        db.create(tables, CHECKPOINT_FORMAT_VERSION)
    except:
        logger.warning("Failed to write checkpoint %s", path)
        db.close()
        remove(path)
        raise
    db.close()
    logger.info(
        "Saved checkpoint %s (%d tensors, config %s)",
        path, len(params), config.fingerprint())
    return path


def read_checkpoint_metadata(path):
    """Every entry of the config table, JSON-decoded"""
    with _open_checkpoint(path) as db:
        return _read_config(db, path)


def _open_checkpoint(path):
    if not exists(path):
        raise ConfigError("Checkpoint %s does not exist" % path)
    db = Database(path)
    try:
        is_checkpoint = (
            db.has_version() and
            db.has_tables([CONFIG_TABLE, PARAMETERS_TABLE]))
    except sqlite3.DatabaseError as e:
        db.connection.close()
        raise ConfigError("%s is not an intentformer checkpoint (%s)" % (path, e))
    if not is_checkpoint:
        db.close()
        raise ConfigError("%s is not an intentformer checkpoint" % path)
    if db.version() != CHECKPOINT_FORMAT_VERSION:
        version = db.version()
        db.close()
        raise ConfigError(
            "Checkpoint %s has format version %d, expected %d" % (
                path, version, CHECKPOINT_FORMAT_VERSION))
    return db


def _read_config(db, path):
    try:
        return {
            key: json.loads(value)
            for key, value in db.select(CONFIG_TABLE, ["key", "value"], order_by="key")
        }
    except ValueError as e:
        raise ConfigError("Corrupt config table in %s: %s" % (path, e))


def load_checkpoint(path, with_metadata=False):
    """
    Read a checkpoint written by save_checkpoint.

    Returns (ModelParams, ModelConfig), plus the dict of extra metadata
    when `with_metadata` is True. The metadata is also kept on the
    returned parameters.
    """
    with _open_checkpoint(path) as db:
        metadata = _read_config(db, path)
        rows = db.select(
            PARAMETERS_TABLE, ["name", "shape", "data"], order_by="position")
    if "model" not in metadata:
        raise ConfigError("Checkpoint %s has no model configuration" % path)
    config = ModelConfig.from_dict(metadata.pop("model"))
    named_arrays = []
    for name, shape, data in rows:
        array = np.frombuffer(data, dtype=BUFFER_DTYPE).astype(np.float64)
        named_arrays.append((name, array.reshape(json.loads(shape))))
    params = ModelParams.from_arrays(
        named_arrays, config=config, metadata=metadata)
    logger.info("Loaded checkpoint %s (config %s)", path, config.fingerprint())
    if with_metadata:
        return params, config, metadata
    return params, config
