from os.path import join
import tempfile

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from intentformer.errors import DataError, ParseError
from intentformer.loading import (
    CSV_COLUMNS,
    chunk_scenes,
    is_scene_dir,
    load_csv,
    load_recording,
    load_scene_dir,
    save_scenes,
)

HEADER = ",".join(CSV_COLUMNS)


def eq_(x, y):
    assert x == y


def write_csv(lines, header=HEADER):
    path = join(tempfile.mkdtemp(), "recording.csv")
    with open(path, "w") as f:
        if header is not None:
            f.write(header + "\n")
        for line in lines:
            f.write(line + "\n")
    return path


def row(frame, vehicle_id, x=0.0, y=0.0):
    return "%d,%d,%s,%s,1,0,0,0,0,0" % (frame, vehicle_id, x, y)


def recording(n_frames=20, late_vehicle_start=12):
    """Vehicle 1 on every frame, vehicle 2 only from `late_vehicle_start`"""
    lines = []
    for frame in range(n_frames):
        lines.append(row(frame, 1, x=float(frame), y=0.5))
        if frame >= late_vehicle_start:
            lines.append(row(frame, 2, x=float(frame) + 10, y=4.0))
    return write_csv(lines)


def test_load_csv_tracks():
    tracks = load_csv(recording(n_frames=6, late_vehicle_start=3), sample_rate_hz=1)
    eq_([t.vehicle_id for t in tracks], [1, 2])
    assert_array_equal(tracks[0].frames, np.arange(6))
    assert_array_equal(tracks[1].frames, [3, 4, 5])
    assert_allclose(tracks[1].states[:, 0], [13.0, 14.0, 15.0])


def test_bad_value_reports_line():
    path = write_csv([row(0, 1), "1,1,abc,0,1,0,0,0,0,0"])
    with pytest.raises(ParseError) as e:
        load_csv(path)
    eq_(e.value.line_number, 3)
    assert "x" in str(e.value)


def test_extra_field_reports_line():
    path = write_csv([row(0, 1), row(1, 1) + ",7"])
    with pytest.raises(ParseError) as e:
        load_csv(path)
    eq_(e.value.line_number, 3)


def test_missing_column_is_a_header_error():
    path = write_csv([], header="frame,vehicle_id,x,y")
    with pytest.raises(ParseError) as e:
        load_csv(path)
    eq_(e.value.line_number, 1)


def test_empty_file():
    path = write_csv([], header=None)
    with pytest.raises(ParseError) as e:
        load_csv(path)
    eq_(e.value.line_number, 1)


def test_header_only_has_no_tracks():
    eq_(load_csv(write_csv([])), [])


def test_fractional_frame():
    path = write_csv([row(0, 1), "1.5,1,0,0,1,0,0,0,0,0"])
    with pytest.raises(ParseError) as e:
        load_csv(path)
    eq_(e.value.line_number, 3)


def test_duplicate_rows():
    path = write_csv([row(0, 1), row(1, 1), row(1, 1, x=2.0)])
    with pytest.raises(DataError):
        load_csv(path)


def test_frames_going_backwards():
    path = write_csv([row(2, 1), row(1, 1)])
    with pytest.raises(DataError):
        load_csv(path)


def test_chunking_whole_windows_only():
    scenes = load_recording(recording(), sample_rate_hz=1, hist_s=4, pred_s=4)
    eq_(len(scenes), 2)
    eq_([s.meta["offset"] for s in scenes], [0, 8])
    for scene in scenes:
        eq_(scene.features.shape[1:], (8, 8))
        eq_(scene.sample_rate_hz, 1)
    # vehicle 2 only appears in the second window's future
    eq_(list(scenes[1].ids), [1])
    assert_allclose(scenes[1].features[0, :, 0], np.arange(8, 16))


def test_chunking_keeps_partially_present_vehicles():
    tracks = load_csv(recording(n_frames=16, late_vehicle_start=10), sample_rate_hz=1)
    scenes = chunk_scenes(tracks, sample_rate_hz=1, hist_s=4, pred_s=4, stride_s=2)
    eq_([s.meta["offset"] for s in scenes], [0, 2, 4, 6, 8])
    scene = scenes[-1]
    eq_(list(scene.ids), [1, 2])
    assert_array_equal(scene.mask[1], [False, False, True, True, True, True, True, True])
    assert_array_equal(scene.features[1, :2], np.zeros((2, 8)))


def test_short_recording_has_no_scenes():
    tracks = load_csv(recording(n_frames=5), sample_rate_hz=1)
    eq_(chunk_scenes(tracks, sample_rate_hz=1, hist_s=4, pred_s=4), [])


def test_chunking_needs_frames():
    with pytest.raises(DataError):
        chunk_scenes([], sample_rate_hz=1, hist_s=0.2, pred_s=4)


def test_save_and_load_scene_dir():
    scenes = load_recording(
        recording(n_frames=16, late_vehicle_start=2), sample_rate_hz=1, hist_s=4, pred_s=4)
    directory = tempfile.mkdtemp()
    save_scenes(scenes, directory, manifest={"generator": "test"})
    assert is_scene_dir(directory)
    loaded = load_scene_dir(directory)
    eq_(len(loaded), len(scenes))
    for original, copy in zip(scenes, loaded):
        eq_(list(copy.ids), list(original.ids))
        eq_(copy.meta["offset"], original.meta["offset"])
        assert_array_equal(copy.mask, original.mask)
        assert_array_equal(copy.features, original.features)


def test_save_no_scenes_writes_manifest():
    directory = tempfile.mkdtemp()
    save_scenes([], directory)
    assert is_scene_dir(directory)
    eq_(load_scene_dir(directory), [])
