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

import hashlib
import json
import os
from os.path import basename, join, splitext
import re

import appdirs

CACHE_DIR_ENVKEY = "INTENTFORMER_CACHE_DIR"

MAX_FILENAME_LENGTH = 150


def ensure_dir(path):
    """makedirs that tolerates an existing directory"""
    os.makedirs(path, exist_ok=True)


def get_data_dir(subdir=None, envkey=CACHE_DIR_ENVKEY):
    """
    Cache root: the directory named by `envkey` when set (with `subdir`
    appended), otherwise the per-user cache directory for `subdir`.
    """
    root = os.environ.get(envkey) if envkey else None
    if not root:
        return appdirs.user_cache_dir(subdir or "intentformer")
    return join(root, subdir) if subdir else root


def normalize_filename(filename):
    """
    Replace path separators, whitespace and shell-unfriendly characters
    with underscores; long names keep their tail behind an MD5 prefix.
    """
    filename = re.sub(r"[/\\;:?=\s]", "_", filename)
    if len(filename) <= MAX_FILENAME_LENGTH:
        return filename
    digest = hashlib.md5(filename.encode("utf-8")).hexdigest()
    return digest + filename[-(MAX_FILENAME_LENGTH - 10):]


def file_digest(path, block_size=1 << 20):
    """MD5 hex digest of a file's contents"""
    digest = hashlib.md5()
    with open(path, "rb") as f:
        while True:
            block = f.read(block_size)
            if not block:
                break
            digest.update(block)
    return digest.hexdigest()


def build_local_filename(source_path, **chunking):
    """
    Name of the cache entry for scenes cut from `source_path`: the digest
    of the file contents, the original base name, and the chunking options
    so that different windows of the same recording never collide.
    """
    assert source_path, "A source path must be specified"
    base = splitext(basename(source_path))[0]
    options = "_".join(
        "%s%s" % (key, chunking[key]) for key in sorted(chunking)
        if chunking[key] is not None)
    filename = "%s.%s" % (file_digest(source_path), base)
    if options:
        filename += "." + options
    return normalize_filename(filename)


def fingerprint(document, length=12):
    """Short SHA-1 of a JSON-serializable document (key order independent)"""
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:length]
