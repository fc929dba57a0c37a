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

import logging
from os import listdir
from os.path import abspath, exists, join
from shutil import rmtree

from . import common
from .loading import is_scene_dir, load_recording, load_scene_dir, save_scenes

logger = logging.getLogger(__name__)


class SceneCache(object):
    """
    Scenes chunked from recording CSVs, kept on disk so that each
    recording is parsed and cut only once per chunking setup.
    """
    def __init__(self, subdir="intentformer"):
        assert subdir
        self.subdir = subdir
        self.cache_directory_path = common.get_data_dir(subdir)

        # dictionary mapping from (source path, chunking options) to
        # cache entry directories
        self._local_paths = {}

    @staticmethod
    def _key(source_path, sample_rate_hz, hist_s, pred_s, stride_s):
        return (abspath(source_path), sample_rate_hz, hist_s, pred_s, stride_s)

    def local_filename(
            self,
            source_path,
            sample_rate_hz=10,
            hist_s=5,
            pred_s=5,
            stride_s=None):
        """
        Which directory name will we use within the cache directory for the
        given recording and chunking options.
        """
        return common.build_local_filename(
            source_path,
            hz=sample_rate_hz,
            hist=hist_s,
            pred=pred_s,
            stride=stride_s)

    def local_path(self, source_path, sample_rate_hz=10, hist_s=5, pred_s=5, stride_s=None):
        """
        What will the full local path be once the recording is chunked?
        """
        filename = self.local_filename(
            source_path, sample_rate_hz, hist_s, pred_s, stride_s)
        return join(self.cache_directory_path, filename)

    def exists(self, source_path, sample_rate_hz=10, hist_s=5, pred_s=5, stride_s=None):
        """
        Return True if chunked scenes for these arguments are on disk.
        """
        return is_scene_dir(self.local_path(
            source_path, sample_rate_hz, hist_s, pred_s, stride_s))

    def fetch(
            self,
            source_path,
            sample_rate_hz=10,
            hist_s=5,
            pred_s=5,
            stride_s=None,
            force=False):
        """
        Return the scenes chunked from `source_path`. Don't parse the CSV
        again if a cached copy is present, unless `force` is True.
        """
        key = self._key(source_path, sample_rate_hz, hist_s, pred_s, stride_s)
        path = self._local_paths.get(key)
        if path is None or force or not is_scene_dir(path):
            self._local_paths.pop(key, None)
            path = self.local_path(
                source_path, sample_rate_hz, hist_s, pred_s, stride_s)
        if not force and is_scene_dir(path):
            logger.info("Cached scenes %s for %s", path, source_path)
            scenes = load_scene_dir(path)
        else:
            logger.info("Chunking %s into %s", source_path, path)
            scenes = load_recording(
                source_path,
                sample_rate_hz=sample_rate_hz,
                hist_s=hist_s,
                pred_s=pred_s,
                stride_s=stride_s)
            if exists(path):
                rmtree(path)
            save_scenes(scenes, path, manifest={"recording": abspath(source_path)})
        self._local_paths[key] = path
        return scenes

    def delete(self, source_path):
        """
        Delete every cached chunking of the given recording
        """
        source_path = abspath(source_path)
        for key in list(self._local_paths):
            if key[0] == source_path:
                path = self._local_paths.pop(key)
                if exists(path):
                    rmtree(path)

        # entries may have been written by another SceneCache object, so
        # also remove anything carrying this recording's content digest
        if exists(source_path) and exists(self.cache_directory_path):
            prefix = common.file_digest(source_path) + "."
            for name in listdir(self.cache_directory_path):
                if name.startswith(prefix):
                    rmtree(join(self.cache_directory_path, name))

    def delete_all(self):
        self._local_paths.clear()
        if exists(self.cache_directory_path):
            rmtree(self.cache_directory_path)
        common.ensure_dir(self.cache_directory_path)
