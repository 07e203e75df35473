import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tapemend.errors import (
    CropTooLarge, EmptyClip, InvalidParam, NotFound, ShapeMismatch,
)
from tapemend.video_io import (
    ClipManifest, Frame, ManifestEntry, center_crop, load_clip,
    save_clip, to_compute, to_storage, window,
)
from conftest import make_storage_clip


class TestForms:
    def test_round_trip_all_256_values(self):
        values = np.arange(256, dtype=np.uint8).reshape(16, 16)
        data = np.stack([values] * 3, axis=-1)
        assert np.array_equal(to_storage(to_compute(data)), data)

    def test_compute_range(self):
        data = to_compute(np.array([[[0, 128, 255]]], dtype=np.uint8))
        assert data.dtype == np.float32
        assert data.min() == 0.0 and data.max() == 1.0

    def test_frame_requires_three_channels(self):
        with pytest.raises(ShapeMismatch):
            Frame(np.zeros((4, 4, 1), dtype=np.uint8))

    def test_frame_rejects_out_of_range_compute(self):
        with pytest.raises(ShapeMismatch):
            Frame(np.full((2, 2, 3), 1.5, dtype=np.float32))

    def test_clip_forms(self):
        clip = make_storage_clip()
        assert clip.form == "storage"
        assert clip.to_compute().form == "compute"
        assert np.array_equal(clip.to_compute().to_storage().data, clip.data)


class TestLoadSave:
    def test_save_load_round_trip(self, tmp_path):
        clip = make_storage_clip(n=5, h=24, w=16, seed=11)
        entry = save_clip(clip, tmp_path / "c")
        assert entry["frame_count"] == 5
        names = sorted(p.name for p in (tmp_path / "c").iterdir())
        assert names == [f"{i:06d}.png" for i in range(5)]
        loaded = load_clip(tmp_path / "c")
        assert np.array_equal(loaded.data, clip.data)

    def test_load_missing_path(self, tmp_path):
        with pytest.raises(NotFound):
            load_clip(tmp_path / "nope")

    def test_load_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(EmptyClip):
            load_clip(tmp_path / "empty")

    def test_load_inconsistent_shapes(self, tmp_path):
        save_clip(make_storage_clip(n=2, h=64, w=64), tmp_path / "c")
        save_clip(make_storage_clip(n=1, h=32, w=48), tmp_path / "odd")
        (tmp_path / "odd" / "000000.png").rename(tmp_path / "c" / "zzz.png")
        with pytest.raises(ShapeMismatch):
            load_clip(tmp_path / "c")

    def test_save_rejects_compute_form(self, tmp_path):
        with pytest.raises(InvalidParam):
            save_clip(make_storage_clip().to_compute(), tmp_path / "c")

    def test_lexicographic_order(self, tmp_path):
        clip = make_storage_clip(n=3, seed=5)
        d = tmp_path / "c"
        d.mkdir()
        # names deliberately saved out of creation order
        from PIL import Image
        for i, name in [(2, "c.png"), (0, "a.png"), (1, "b.png")]:
            Image.fromarray(clip.data[i]).save(d / name)
        loaded = load_clip(d)
        assert np.array_equal(loaded.data, clip.data)


class TestCenterCrop:
    def test_documented_offset(self):
        # 720x1280 -> 512: offsets floor((720-512)/2)=104, floor((1280-512)/2)=384
        clip = make_storage_clip(n=1, h=720, w=1280, seed=2)
        cropped = center_crop(clip, 512)
        assert cropped.data.shape == (1, 512, 512, 3)
        assert np.array_equal(cropped.data[0], clip.data[0, 104:616, 384:896])

    def test_identity_when_exact(self):
        clip = make_storage_clip(n=2, h=32, w=32)
        assert np.array_equal(center_crop(clip, 32).data, clip.data)

    def test_odd_margin_goes_bottom_right(self):
        # 4x4 -> 2: margin 2, rows/cols 1..2
        clip = make_storage_clip(n=1, h=4, w=4, seed=3)
        cropped = center_crop(clip, 2)
        assert np.array_equal(cropped.data[0], clip.data[0, 1:3, 1:3])

    def test_too_large(self):
        with pytest.raises(CropTooLarge):
            center_crop(make_storage_clip(h=16, w=16), 17)

    def test_idempotent(self):
        clip = make_storage_clip(n=2, h=37, w=53, seed=9)
        once = center_crop(clip, 16)
        assert np.array_equal(center_crop(once, 16).data, once.data)


class TestWindow:
    def test_exact_tiling(self):
        clip = make_storage_clip(n=10)
        wins = window(clip, t=5, stride=5)
        assert len(wins) == 2
        assert np.array_equal(wins[0].data, clip.data[:5])
        assert np.array_equal(wins[1].data, clip.data[5:])

    def test_reflect_tail_n7(self):
        clip = make_storage_clip(n=7)
        wins = window(clip, t=5, stride=5)
        assert len(wins) == 2
        expected = clip.data[[5, 6, 5, 4, 3]]
        assert np.array_equal(wins[1].data, expected)

    def test_reflect_tail_n3(self):
        clip = make_storage_clip(n=3)
        wins = window(clip, t=5, stride=5)
        assert len(wins) == 1
        assert np.array_equal(wins[0].data, clip.data[[0, 1, 2, 1, 0]])

    def test_single_frame(self):
        clip = make_storage_clip(n=1)
        wins = window(clip, t=5, stride=5)
        assert len(wins) == 1
        assert all(np.array_equal(wins[0].data[i], clip.data[0]) for i in range(5))

    @given(n=st.integers(1, 40), t=st.integers(1, 8))
    @settings(max_examples=60, deadline=None)
    def test_stride_equals_t_partitions_indices(self, n, t):
        clip = make_storage_clip(n=n, h=8, w=8, seed=n * 13 + t)
        wins = window(clip, t=t, stride=t)
        assert len(wins) == -(-n // t)  # ceil
        # concatenated windows start with every original frame exactly once;
        # only the tail beyond n holds reflected padding
        flat = np.concatenate([w.data for w in wins], axis=0)
        assert np.array_equal(flat[:n], clip.data)

    def test_invalid_params(self):
        clip = make_storage_clip(n=3)
        with pytest.raises(InvalidParam):
            window(clip, t=0, stride=1)
        with pytest.raises(InvalidParam):
            window(clip, t=1, stride=0)


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = ClipManifest(entries=[
            ManifestEntry("a", 10, "train"), ManifestEntry("b", 5, "val")])
        assert manifest.total_frames == 15
        manifest.save(tmp_path / "manifest.json")
        loaded = ClipManifest.load(tmp_path / "manifest.json")
        assert loaded.total_frames == 15
        assert loaded.root == tmp_path
        assert [e.source_id for e in loaded.split_entries("train")] == ["a"]

    def test_duplicate_entry_rejected(self):
        with pytest.raises(InvalidParam):
            ClipManifest(entries=[ManifestEntry("a", 1, "train"),
                                  ManifestEntry("a", 2, "val")])

    def test_unknown_split_rejected(self):
        with pytest.raises(InvalidParam):
            ClipManifest(entries=[ManifestEntry("a", 1, "test")])
