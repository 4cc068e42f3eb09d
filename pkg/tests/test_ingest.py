import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcd import ingest
from vcd.ingest import (
    AlignmentError,
    BoundingBox,
    DepthField,
    EgoState,
    EntityClass,
    FixtureError,
    SurfaceMap,
    TrackedEntity,
    VideoFixtures,
    VideoManifest,
    align_streams,
    load_depth_field,
    load_legend,
    load_surface_map,
    load_track_file,
    write_depth_field,
    write_surface_map,
    write_track_file,
)
from vcd.synth import CROSSING_LEGEND, crossing_surface_codes

from conftest import make_depth, make_surface


# --- tracks -----------------------------------------------------------------

def test_track_row_maps_fields_directly(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text("1,8,100,200,40,90,0.91,pedestrian\n")
    frames = load_track_file(path)
    assert len(frames) == 1
    frame, entities = frames[0]
    assert frame == 1
    (e,) = entities
    assert e.id == 8
    assert (e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h) == (100, 200, 40, 90)
    assert e.confidence == 0.91
    assert e.cls is EntityClass.PEDESTRIAN


def test_two_rows_same_frame_group_together(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text(
        "3,12,5,5,10,20,0.5,pedestrian\n"
        "3,8,1,1,10,20,0.5,pedestrian\n"
    )
    frames = load_track_file(path)
    assert len(frames) == 1
    _, entities = frames[0]
    assert [e.id for e in entities] == [8, 12]  # sorted by id


def test_confidence_out_of_range_rejected(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text("1,8,0,0,10,10,1.2,pedestrian\n")
    with pytest.raises(FixtureError, match="confidence out of range"):
        load_track_file(path)


def test_duplicate_frame_id_rejected(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text(
        "1,8,0,0,10,10,0.9,pedestrian\n"
        "1,8,5,5,10,10,0.9,pedestrian\n"
    )
    with pytest.raises(FixtureError, match=r"tracks.csv:2.*duplicate"):
        load_track_file(path)


def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text("1,8,0,0,10,10,0.9,pedestrian\nnot,a,row\n")
    with pytest.raises(FixtureError, match=r"tracks.csv:2"):
        load_track_file(path)


def test_class_change_mid_track_rejected(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text(
        "1,8,0,0,10,10,0.9,pedestrian\n"
        "2,8,0,0,10,10,0.9,vehicle\n"
    )
    with pytest.raises(FixtureError, match="changes class"):
        load_track_file(path)


def test_track_round_trip(tmp_path):
    frames = [
        (0, [TrackedEntity(8, EntityClass.PEDESTRIAN, BoundingBox(10.5, 20.25, 30.0, 40.0), 0.875)]),
        (2, [
            TrackedEntity(8, EntityClass.PEDESTRIAN, BoundingBox(11.0, 21.0, 30.0, 40.0), 0.9),
            TrackedEntity(9, EntityClass.VEHICLE, BoundingBox(50.0, 60.0, 20.0, 10.0), 1.0),
        ]),
    ]
    path = tmp_path / "tracks.csv"
    write_track_file(frames, path)
    assert load_track_file(path) == frames


# --- surfaces -----------------------------------------------------------------

def test_uniform_mask_counts_all_pixels(tmp_path):
    codes = np.ones((10, 10), dtype=np.uint8)
    path = tmp_path / "m.png"
    write_surface_map(SurfaceMap(10, 10, codes, {0: "none", 1: "road_0"}), path)
    loaded = load_surface_map(path, {0: "none", 1: "road_0"})
    assert loaded.region_areas == {"road_0": 100}


def test_half_and_half_mask(tmp_path):
    codes = np.ones((10, 10), dtype=np.uint8)
    codes[:, 5:] = 2
    path = tmp_path / "m.png"
    legend = {0: "none", 1: "road_0", 2: "sidewalk_0"}
    write_surface_map(SurfaceMap(10, 10, codes, legend), path)
    loaded = load_surface_map(path, legend)
    assert loaded.region_areas == {"road_0": 50, "sidewalk_0": 50}


def test_crossing_mask_road_area_preserved_through_loader(tmp_path):
    codes = crossing_surface_codes()
    path = tmp_path / "mask.png"
    write_surface_map(SurfaceMap(1152, 768, codes, dict(CROSSING_LEGEND)), path)
    loaded = load_surface_map(path, dict(CROSSING_LEGEND))
    assert loaded.region_areas["road_0"] == 252945


def test_pixel_value_missing_from_legend(tmp_path):
    codes = np.full((4, 4), 9, dtype=np.uint8)
    path = tmp_path / "m.png"
    write_surface_map(SurfaceMap(4, 4, codes, {9: "road_0"}), path)
    with pytest.raises(FixtureError, match="missing from legend"):
        load_surface_map(path, {0: "none", 1: "road_0"})


def test_legend_rejects_unknown_label(tmp_path):
    path = tmp_path / "legend.json"
    path.write_text(json.dumps({"0": "none", "1": "grass"}))
    with pytest.raises(FixtureError, match="bad surface label"):
        load_legend(path)


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_region_areas_match_pixel_counts_on_random_masks(data):
    w = data.draw(st.integers(4, 24))
    h = data.draw(st.integers(4, 24))
    n_labels = data.draw(st.integers(1, 3))
    legend = {0: "none"}
    legend.update({i: f"road_{i - 1}" for i in range(1, n_labels + 1)})
    codes = np.array(
        data.draw(
            st.lists(
                st.lists(st.integers(0, n_labels), min_size=w, max_size=w),
                min_size=h,
                max_size=h,
            )
        ),
        dtype=np.uint8,
    )
    surface = SurfaceMap(w, h, codes, legend)
    for code, label in legend.items():
        if label == "none":
            continue
        expected = int(np.count_nonzero(codes == code))
        assert surface.region_areas.get(label, 0) == expected


# --- depth ---------------------------------------------------------------------

def test_depth_round_trip(tmp_path):
    depth = make_depth(6, 4, patches=[(0, 0, 3, 2, 7.5)])
    path = tmp_path / "f.depth"
    write_depth_field(depth, path)
    loaded = load_depth_field(path)
    assert loaded.width == 6 and loaded.height == 4
    assert np.array_equal(np.isnan(loaded.depth), np.isnan(depth.depth))
    assert np.array_equal(loaded.depth[~np.isnan(loaded.depth)], depth.depth[~np.isnan(depth.depth)])


def test_depth_payload_size_mismatch(tmp_path):
    path = tmp_path / "f.depth"
    path.write_bytes(b"4 4\n" + b"\x00" * 10)
    with pytest.raises(FixtureError, match="payload"):
        load_depth_field(path)


def test_depth_rejects_negative_known_values():
    with pytest.raises(FixtureError, match="finite"):
        DepthField(2, 2, np.full((2, 2), -1.0, dtype=np.float32))


def test_zero_depth_is_legal_and_distinct_from_unknown():
    d = make_depth(2, 2, patches=[(0, 0, 1, 1, 0.0)])
    assert d.median_in(BoundingBox(0, 0, 1, 1)) == 0.0
    assert d.median_in(BoundingBox(1, 1, 1, 1)) is None


# --- alignment -------------------------------------------------------------------

def _streams(n_frames, w=16, h=12):
    surface = make_surface(w, h, {"road_0": (0, 0, w, h)})
    depth = make_depth(w, h, fill=5.0)
    tracks = [
        (f, [TrackedEntity(1, EntityClass.PEDESTRIAN, BoundingBox(2, 2, 4, 6), 0.9)])
        for f in range(n_frames)
    ]
    surfaces = {f: surface for f in range(n_frames)}
    depths = {f: depth for f in range(n_frames)}
    return tracks, surfaces, depths


def test_align_produces_one_observation_per_track_frame():
    tracks, surfaces, depths = _streams(4)
    manifest = VideoManifest("v", 30.0, 16, 12)
    observations = align_streams(tracks, surfaces, depths, None, manifest)
    assert [o.frame_index for o in observations] == [0, 1, 2, 3]
    timestamps = [o.timestamp for o in observations]
    assert timestamps == sorted(timestamps)
    assert len(set(timestamps)) == 4


def test_align_missing_mask_names_frame():
    tracks, surfaces, depths = _streams(4)
    del surfaces[2]
    manifest = VideoManifest("v", 30.0, 16, 12)
    with pytest.raises(AlignmentError, match=r"\[2\]"):
        align_streams(tracks, surfaces, depths, None, manifest)


def test_align_empty_tracks_is_empty_not_error():
    manifest = VideoManifest("v", 30.0, 16, 12)
    assert align_streams([], {}, {}, None, manifest) == []


def test_align_preserves_id_set():
    tracks, surfaces, depths = _streams(3)
    tracks[1] = (1, tracks[1][1] + [TrackedEntity(7, EntityClass.VEHICLE, BoundingBox(1, 1, 2, 2), 0.5)])
    manifest = VideoManifest("v", 30.0, 16, 12)
    observations = align_streams(tracks, surfaces, depths, None, manifest)
    seen = {e.id for o in observations for e in o.entities}
    expected = {e.id for _, entities in tracks for e in entities}
    assert seen == expected


def test_align_clamps_and_flags_overshooting_boxes():
    tracks, surfaces, depths = _streams(1)
    tracks[0] = (0, [TrackedEntity(1, EntityClass.PEDESTRIAN, BoundingBox(10, 8, 20, 20), 0.9)])
    manifest = VideoManifest("v", 30.0, 16, 12)
    (obs,) = align_streams(tracks, surfaces, depths, None, manifest)
    bbox = obs.entities[0].bbox
    assert bbox.clamped
    assert bbox.x + bbox.w <= 16 and bbox.y + bbox.h <= 12


def test_video_fixtures_round_trip(tmp_path):
    from vcd.synth import demo_fixture

    root = demo_fixture(tmp_path, seconds=2.0)
    fixtures = VideoFixtures(root)
    assert fixtures.n_frames == 60
    observations = fixtures.load_window([0, 15, 30, 45])
    assert [o.frame_index for o in observations] == [0, 15, 30, 45]
    assert {e.id for e in observations[0].entities} == {8, 12}

    # Canonical serialization of a loaded frame reloads to the same value.
    obs = observations[0]
    write_track_file([(0, list(obs.entities))], tmp_path / "rt.csv")
    reloaded = load_track_file(tmp_path / "rt.csv")
    assert reloaded == [(0, list(obs.entities))]
    write_surface_map(obs.surfaces, tmp_path / "rt.png")
    surface = load_surface_map(tmp_path / "rt.png", obs.surfaces.legend)
    assert np.array_equal(surface.codes, obs.surfaces.codes)
    assert surface.region_areas == obs.surfaces.region_areas
    write_depth_field(obs.depth, tmp_path / "rt.depth")
    depth = load_depth_field(tmp_path / "rt.depth")
    assert np.array_equal(
        np.nan_to_num(depth.depth, nan=-1.0), np.nan_to_num(obs.depth.depth, nan=-1.0)
    )


def test_manifest_defaults_and_validation(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"video_id": "v"}))
    m = ingest.load_manifest(path)
    assert (m.width, m.height, m.hfov_deg, m.fps) == (1920, 1080, 90.0, 30.0)
    with pytest.raises(FixtureError):
        VideoManifest("v", fps=0)
    with pytest.raises(FixtureError):
        VideoManifest("v", hfov_deg=180.0)


def test_ego_defaults_are_well_formed():
    e = EgoState()
    assert e.speed_kmh == 0.0
    with pytest.raises(FixtureError):
        EgoState(speed_kmh=-1.0)
