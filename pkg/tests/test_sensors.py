import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacforce.errors import ConfigError
from tacforce.sensors import (ContactState, displacement_field, generate_episode,
                              indenter_ids, make_profile, mirror_contact,
                              normal_depth_field, reference_render, render_frame,
                              wrench_trajectory)

from .conftest import zero_wrench_contact


class TestMakeProfile:
    @pytest.mark.parametrize("kind,count", [
        ("grid_vision", 80), ("pin_vision", 127), ("taxel_array", 16),
    ])
    def test_marker_counts(self, kind, count):
        profile = make_profile(kind, "left", 0)
        assert profile.n_markers == count

    def test_grid_vision_lattice(self):
        pos = make_profile("grid_vision", "left", 0).marker_positions
        assert len(np.unique(np.round(pos[:, 0], 9))) == 8
        assert len(np.unique(np.round(pos[:, 1], 9))) == 10

    def test_taxel_4x4(self):
        pos = make_profile("taxel_array", "left", 0).marker_positions
        assert len(np.unique(np.round(pos[:, 0], 9))) == 4
        assert len(np.unique(np.round(pos[:, 1], 9))) == 4

    def test_markers_inside_active_area(self):
        for kind in ("grid_vision", "pin_vision", "taxel_array"):
            profile = make_profile(kind, "left", 3)
            w, h = profile.active_area
            pos = profile.marker_positions
            assert (pos[:, 0] > 0).all() and (pos[:, 0] < w).all()
            assert (pos[:, 1] > 0).all() and (pos[:, 1] < h).all()
            assert profile.shear_gain > 0 and profile.normal_gain > 0

    def test_fixed_seed_identity(self):
        a = make_profile("pin_vision", "right", 7)
        b = make_profile("pin_vision", "right", 7)
        assert np.array_equal(a.marker_positions, b.marker_positions)
        assert a.to_dict() == b.to_dict()

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_profile("galvanic", "left", 0)

    def test_bad_gain(self):
        with pytest.raises(ConfigError):
            make_profile("grid_vision", "left", 0, shear_gain=0.0)


class TestDisplacementField:
    def test_zero_wrench_is_zero(self):
        profile = make_profile("grid_vision", "left", 0)
        u = displacement_field(profile, zero_wrench_contact())
        assert np.array_equal(u, np.zeros_like(u))

    def test_unit_shear_at_marker(self):
        # contact centered on a marker: weight = 1, radial term vanishes
        profile = make_profile("grid_vision", "left", 0, shear_gain=0.8)
        center = profile.marker_positions[17]
        contact = ContactState(wrench=np.array([1.0, 0, 0, 0, 0, 0]),
                               contact_center=center.copy(), indenter_id="cube")
        u = displacement_field(profile, contact)
        assert u[17] == pytest.approx([0.8, 0.0], abs=1e-12)

    @given(seed=st.integers(0, 1000), scale=st.floats(0.1, 5.0))
    @settings(max_examples=25, deadline=None)
    def test_linearity_scaling(self, seed, scale):
        profile = make_profile("pin_vision", "left", 0)
        rng = np.random.default_rng(seed)
        wrench = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3),
                           rng.uniform(0, 12), 0, 0, 0])
        center = np.array([20.0, 20.0]) + rng.uniform(-5, 5, 2)
        base = ContactState(wrench=wrench, contact_center=center, indenter_id="dome")
        scaled = ContactState(wrench=scale * wrench, contact_center=center,
                              indenter_id="dome")
        u1 = displacement_field(profile, base)
        u2 = displacement_field(profile, scaled)
        assert np.allclose(u2, scale * u1, rtol=1e-9, atol=1e-12)

    def test_normal_depth_peak_at_center(self):
        profile = make_profile("taxel_array", "left", 0)
        center = profile.marker_positions[5]
        contact = ContactState(wrench=np.array([0, 0, 6.0, 0, 0, 0]),
                               contact_center=center.copy(), indenter_id="cube")
        dz = normal_depth_field(profile, contact)
        assert dz[5] == pytest.approx(profile.normal_gain * 6.0)
        assert np.argmax(dz) == 5


class TestRenderFrame:
    def test_zero_displacement_matches_reference(self):
        profile = make_profile("grid_vision", "left", 0)
        raw = render_frame(profile, np.zeros((80, 2)))
        ref = reference_render(profile)
        assert np.array_equal(raw.image, ref.image)

    def test_count_mismatch(self):
        profile = make_profile("grid_vision", "left", 0)
        with pytest.raises(ValueError):
            render_frame(profile, np.zeros((79, 2)))

    def test_taxel_zero_contact_zero_signal(self):
        profile = make_profile("taxel_array", "left", 0)
        raw = render_frame(profile, np.zeros((16, 2)))
        assert raw.taxels.shape == (16, 3)
        assert np.array_equal(raw.taxels, np.zeros((16, 3)))

    def test_offscreen_marker_clipped_silently(self):
        profile = make_profile("grid_vision", "left", 0)
        u = np.zeros((80, 2))
        u[0] = [-500.0, -500.0]  # way outside the frame in mm
        raw = render_frame(profile, u)
        assert raw.image.shape == (480, 640)


class TestMirrorContact:
    def test_offset_flips_x(self):
        contact = ContactState(wrench=np.array([1.0, 0.5, 5.0, 0.1, 0.2, 0.3]),
                               contact_center=np.array([15.0, 10.0]),
                               indenter_id="cube")
        mirrored = mirror_contact(contact, (25.0, 25.0), (40.0, 40.0))
        # offset (2.5, -2.5) from the 25 mm center -> (-2.5, -2.5) at the 40 mm center
        assert mirrored.contact_center == pytest.approx([17.5, 17.5])
        assert mirrored.wrench == pytest.approx([-1.0, 0.5, 5.0, 0.1, -0.2, -0.3])

    def test_involution_same_geometry(self):
        contact = ContactState(wrench=np.array([0.4, -0.2, 3.0, 0, 0, 0]),
                               contact_center=np.array([11.0, 14.0]),
                               indenter_id="ring")
        back = mirror_contact(mirror_contact(contact, (25.0, 25.0), (25.0, 25.0)),
                              (25.0, 25.0), (25.0, 25.0))
        assert back.contact_center == pytest.approx(contact.contact_center)
        assert back.wrench == pytest.approx(contact.wrench)


class TestWrenchTrajectory:
    def test_ranges_and_start(self):
        rng = np.random.default_rng(3)
        w = wrench_trajectory(rng, 200)
        assert w.shape == (200, 6)
        assert np.array_equal(w[0], np.zeros(6))
        assert (w[:, 2] >= 0).all() and (w[:, 2] <= 12.0).all()
        assert (np.abs(w[:, :2]) <= 3.0).all()
        cap = 0.4 * w[:, 2] + 1e-9
        assert (np.abs(w[:, 0]) <= cap).all() and (np.abs(w[:, 1]) <= cap).all()

    def test_torques_zero_by_default(self):
        rng = np.random.default_rng(0)
        w = wrench_trajectory(rng, 50)
        assert np.array_equal(w[:, 3:], np.zeros((50, 3)))


class TestGenerateEpisode:
    def make(self, n=16, seed=11):
        left = make_profile("grid_vision", "left", 0)
        right = make_profile("pin_vision", "right", 0)
        return generate_episode(left, right, "cube", n, seed)

    def test_rejects_short(self):
        left = make_profile("grid_vision", "left", 0)
        right = make_profile("pin_vision", "right", 0)
        with pytest.raises(ValueError):
            generate_episode(left, right, "cube", 1, 0)

    def test_frame_count_and_initial_grasp(self):
        episode = self.make(n=16)
        assert episode.n_frames == 16
        contact0 = episode.frames[0][0]
        assert contact0.wrench[0] == 0.0 and contact0.wrench[1] == 0.0
        assert contact0.wrench[2] == 0.0

    def test_shared_wrench_per_frame(self):
        # a single ContactState record backs both sensors in every frame
        episode = self.make()
        for contact, _, _ in episode.frames:
            assert isinstance(contact, ContactState)
            contact.validate(0.4)

    def test_determinism(self):
        a, b = self.make(seed=21), self.make(seed=21)
        for (ca, la, ra), (cb, lb, rb) in zip(a.frames, b.frames):
            assert np.array_equal(ca.wrench, cb.wrench)
            assert np.array_equal(ca.contact_center, cb.contact_center)
            assert np.array_equal(la.image, lb.image)
            assert np.array_equal(ra.image, rb.image)

    def test_unknown_indenter(self):
        left = make_profile("grid_vision", "left", 0)
        right = make_profile("pin_vision", "right", 0)
        with pytest.raises(ConfigError):
            generate_episode(left, right, "banana", 4, 0)


def test_indenter_ids_extend():
    ids = indenter_ids(10)
    assert len(ids) == 10 and len(set(ids)) == 10
    assert ids[:8] == indenter_ids(8)
