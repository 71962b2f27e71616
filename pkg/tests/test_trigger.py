import numpy as np
import pytest

from trojanpad.trigger import (
    NoisePatchSpec,
    TriggerError,
    TriggerSpec,
    default_cell_px,
    embed_patch,
    embed_trigger,
    render_noise_patch,
    render_trigger,
    resolve_position,
)


def rand_image(size=64, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (size, size, 3))


class TestRenderTrigger:
    def test_single_cell_is_dark(self):
        patch = render_trigger(TriggerSpec(cells=1, cell_px=4))
        assert patch.shape == (4, 4, 3)
        assert np.all(patch == 0.0)

    def test_two_by_two_parity(self):
        patch = render_trigger(TriggerSpec(cells=2, cell_px=1))
        expected = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.array_equal(patch[:, :, 0], expected)
        assert np.array_equal(patch[:, :, 1], expected)
        assert np.array_equal(patch[:, :, 2], expected)

    def test_five_by_five_dark_cell_count(self):
        # parity enumeration: ceil(25 / 2) = 13 dark cells
        dark_by_loop = sum(
            1 for i in range(5) for j in range(5) if (i + j) % 2 == 0
        )
        assert dark_by_loop == 13
        patch = render_trigger(TriggerSpec(cells=5, cell_px=3))
        assert patch.shape == (15, 15, 3)
        cells = patch[::3, ::3, 0]
        assert int(np.sum(cells == 0.0)) == 13

    def test_custom_colors(self):
        patch = render_trigger(TriggerSpec(cells=2, cell_px=1, colors=(0.2, 0.9)))
        assert patch[0, 0, 0] == pytest.approx(0.2)
        assert patch[0, 1, 0] == pytest.approx(0.9)

    def test_invalid_specs(self):
        with pytest.raises(TriggerError):
            TriggerSpec(cells=0).validate()
        with pytest.raises(TriggerError):
            TriggerSpec(cell_px=0).validate()
        with pytest.raises(TriggerError):
            TriggerSpec(colors=(0.5, 0.5)).validate()
        with pytest.raises(TriggerError):
            TriggerSpec(alpha=1.5).validate()
        with pytest.raises(TriggerError):
            TriggerSpec(position="middle").validate()


class TestResolvePosition:
    def test_top_left_inset(self):
        assert resolve_position("top_left", rand_image(), 15) == (2, 2)

    def test_pad_center(self):
        assert resolve_position("pad_center", rand_image(), 15, pad_center=(32, 32)) == (25, 25)

    def test_bottom_right(self):
        assert resolve_position("bottom_right", rand_image(), 10) == (52, 52)

    def test_pad_center_defaults_to_image_center(self):
        x, y = resolve_position("pad_center", rand_image(), 10)
        assert (x, y) == (27, 27)

    def test_explicit_coordinates(self):
        assert resolve_position((3, 4), rand_image(), 10) == (3, 4)

    def test_out_of_bounds(self):
        with pytest.raises(TriggerError):
            resolve_position((60, 60), rand_image(), 10)
        with pytest.raises(TriggerError):
            resolve_position("top_left", rand_image(size=16), 15)


class TestEmbedTrigger:
    def test_alpha_zero_is_identity(self):
        img = rand_image(seed=1)
        out = embed_trigger(img, TriggerSpec(alpha=0.0))
        assert np.array_equal(out, img)

    def test_full_opacity_idempotent(self):
        img = rand_image(seed=2)
        spec = TriggerSpec(alpha=1.0)
        once = embed_trigger(img, spec)
        twice = embed_trigger(once, spec)
        assert np.array_equal(once, twice)

    def test_half_alpha_blend_oracle(self):
        img = np.zeros((64, 64, 3))
        spec = TriggerSpec(cells=2, cell_px=2, position=(10, 10), alpha=0.5)
        out = embed_trigger(img, spec)
        # light cells -> 0.5, dark cells stay 0
        assert out[10, 12, 0] == pytest.approx(0.5)
        assert out[10, 10, 0] == pytest.approx(0.0)

    def test_outside_footprint_untouched(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            img = rng.uniform(0, 1, (32, 32, 3))
            cells = int(rng.integers(1, 6))
            cell_px = int(rng.integers(1, 4))
            fp = cells * cell_px
            x = int(rng.integers(0, 32 - fp + 1))
            y = int(rng.integers(0, 32 - fp + 1))
            spec = TriggerSpec(cells=cells, cell_px=cell_px, position=(x, y),
                               alpha=float(rng.uniform(0, 1)))
            out = embed_trigger(img, spec)
            mask = np.ones((32, 32), dtype=bool)
            mask[y : y + fp, x : x + fp] = False
            assert np.array_equal(out[mask], img[mask])

    def test_does_not_mutate_input(self):
        img = rand_image(seed=4)
        before = img.copy()
        embed_trigger(img, TriggerSpec())
        assert np.array_equal(img, before)

    def test_full_alpha_reproduces_patch(self):
        img = rand_image(seed=5)
        spec = TriggerSpec(cells=5, cell_px=2, position=(7, 9), alpha=1.0)
        out = embed_trigger(img, spec)
        assert np.array_equal(out[9:19, 7:17, :], render_trigger(spec))

    def test_footprint_violation_names_spec(self):
        spec = TriggerSpec(cells=15, cell_px=2, position="bottom_right")
        with pytest.raises(TriggerError, match="30px"):
            embed_trigger(rand_image(size=16), spec)


class TestNoisePatch:
    def test_deterministic(self):
        a = render_noise_patch(NoisePatchSpec(size_px=6, seed=3))
        b = render_noise_patch(NoisePatchSpec(size_px=6, seed=3))
        assert np.array_equal(a, b)
        assert a.shape == (6, 6, 3)

    def test_embed_patch_dispatch(self):
        img = rand_image(seed=6)
        out = embed_patch(img, NoisePatchSpec(size_px=4, seed=1, position=(0, 0)))
        assert np.array_equal(out[:4, :4, :], render_noise_patch(NoisePatchSpec(size_px=4, seed=1)))
        assert np.array_equal(out[4:, :, :], img[4:, :, :])


def test_default_cell_px_scales():
    assert default_cell_px(64) == 2
    assert default_cell_px(224) == 7
    assert default_cell_px(16) == 1
