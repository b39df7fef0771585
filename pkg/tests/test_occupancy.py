import numpy as np
import pytest

from viewguide.geometry import Pose, intrinsics_from_fov
from viewguide.occupancy import FREE, OCCUPIED, UNKNOWN, InvalidRegionError, OccupancyGrid
from viewguide.simulator import Scene, SceneObject, make_frame, orbit_trajectory


def wall_scene() -> Scene:
    return Scene(
        objects=[SceneObject("plane", [0, 0, 2.0], [6.0, 6.0, 0.0], "wall")],
        bounds_min=[-4, -4, -1],
        bounds_max=[4, 4, 4],
    )


def wall_frame(t=0.0):
    intr = intrinsics_from_fov(96, 72)
    return make_frame(wall_scene(), Pose.identity(), intr, t)


class TestIntegrateFrame:
    def test_wall_classifies_front_surface_behind(self):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        grid.integrate_frame(wall_frame(), stride=2)

        def state_at(p):
            idx, inside = grid.voxel_indices(np.array([p]))
            assert inside[0]
            return grid.states[tuple(idx[0])]

        assert state_at([0, 0, 1.0]) == FREE
        assert state_at([0, 0, 0.5]) == FREE
        assert state_at([0, 0, 2.1]) == OCCUPIED
        assert state_at([0, 0, 2.6]) == UNKNOWN

    def test_idempotent(self):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        frame = wall_frame()
        grid.integrate_frame(frame, stride=2)
        first = grid.states.copy()
        grid.integrate_frame(frame, stride=2)
        np.testing.assert_array_equal(grid.states, first)

    def test_no_backward_transitions(self):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        scene = wall_scene()
        intr = intrinsics_from_fov(96, 72)
        previous = grid.states.copy()
        for position in ([0, 0, 0], [0.5, 0.3, 0.2], [-0.4, 0.1, 0.5]):
            frame = make_frame(scene, Pose.look_at(position, [0, 0, 2.0]), intr, 0.0)
            grid.integrate_frame(frame, stride=2)
            now = grid.states
            assert not np.any((previous == OCCUPIED) & (now != OCCUPIED))
            assert not np.any((previous == FREE) & (now == UNKNOWN))
            previous = now.copy()

    def test_orbit_covers_all_box_surface_voxels(self):
        # Oracle: voxelize the box surface by sampling faces on a fine
        # lattice; every one of those voxels must end up occupied.
        box = SceneObject("box", [0, 0, 0], [0.6, 0.6, 0.6], "box")
        scene = Scene(objects=[box], bounds_min=[-4, -4, -4], bounds_max=[4, 4, 4])
        grid = OccupancyGrid.create([-1, -1, -1], [1, 1, 1], voxel_size=0.2)
        intr = intrinsics_from_fov(96, 72)
        trajectory = orbit_trajectory(
            [0, 0, 0], radius=2.0, count=40, duration=40.0, sweeps=2, revolutions=5
        )
        for t, pose in trajectory.samples:
            grid.integrate_frame(make_frame(scene, pose, intr, t), stride=1)

        expected = set()
        half = 0.3
        lattice = np.arange(-half + 0.01, half, 0.05)
        for axis in range(3):
            for sign in (-half, half):
                for a in lattice:
                    for b in lattice:
                        point = [0.0, 0.0, 0.0]
                        point[axis] = sign * 0.999
                        point[(axis + 1) % 3] = a
                        point[(axis + 2) % 3] = b
                        idx, inside = grid.voxel_indices(np.array([point]))
                        assert inside[0]
                        expected.add(tuple(idx[0]))
        for voxel in sorted(expected):
            assert grid.states[voxel] == OCCUPIED, f"surface voxel {voxel} not occupied"

    def test_rays_leaving_grid_clipped_silently(self):
        grid = OccupancyGrid.create([-0.5, -0.5, 0], [0.5, 0.5, 1.0], voxel_size=0.25)
        grid.integrate_frame(wall_frame(), stride=2)  # wall is outside this grid
        assert np.count_nonzero(grid.states == OCCUPIED) == 0
        assert np.count_nonzero(grid.states == FREE) > 0


class TestUnobservedOverlay:
    def test_fresh_grid_everything_unobserved(self):
        grid = OccupancyGrid.create([-2, -2, 0], [2, 2, 3], voxel_size=0.25)
        intr = intrinsics_from_fov(32, 24)
        mask = grid.unobserved_overlay(Pose.identity(), intr)
        assert mask.all()

    def test_carved_view_has_no_overlay(self):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        frame = wall_frame()
        grid.integrate_frame(frame, stride=1)
        mask = grid.unobserved_overlay(frame.pose, frame.intrinsics)
        assert not mask.any()

    def test_doorway_region_flagged(self):
        # Hand-built two-room grid: near room free, dividing wall occupied
        # except a doorway, far room unknown.
        grid = OccupancyGrid.create([-2, -1, -2], [2, 1, 2], voxel_size=0.2)
        wall_z = 10  # z index of the dividing wall (world z in [0.0, 0.2))
        grid.states[:, :, :wall_z] = FREE
        grid.states[:, :, wall_z] = OCCUPIED
        door_x = slice(9, 11)
        grid.states[door_x, :, wall_z] = FREE
        intr = intrinsics_from_fov(64, 48)
        pose = Pose.look_at([0, 0, -1.5], [0, 0, 1.0])
        mask = grid.unobserved_overlay(pose, intr)
        assert mask[24, 32]  # doorway ahead: unknown room visible
        assert not mask[24, 2]  # far left: wall blocks
        assert not mask[24, 61]
        assert 0 < np.count_nonzero(mask) < mask.size


class TestUnobservedFraction:
    def test_fresh_grid_is_one(self):
        grid = OccupancyGrid.create([-1, -1, -1], [1, 1, 1], voxel_size=0.25)
        assert grid.unobserved_fraction([-1, -1, -1], [1, 1, 1]) == 1.0

    def test_fully_carved_region_is_zero(self):
        grid = OccupancyGrid.create([-1, -1, -1], [1, 1, 1], voxel_size=0.25)
        grid.states[:] = FREE
        assert grid.unobserved_fraction([-1, -1, -1], [1, 1, 1]) == 0.0

    def test_half_carved_slab_counting_oracle(self):
        grid = OccupancyGrid.create([0, 0, 0], [1, 1, 1], voxel_size=0.25)
        grid.states[:, :, :2] = FREE  # carve half the z-extent
        expected = np.count_nonzero(grid.states == UNKNOWN) / grid.states.size
        assert grid.unobserved_fraction([0, 0, 0], [1, 1, 1]) == expected == 0.5

    def test_region_subset_counts_only_region(self):
        rng = np.random.default_rng(9)
        grid = OccupancyGrid.create([0, 0, 0], [2, 2, 2], voxel_size=0.25)
        grid.states[:] = rng.integers(0, 3, size=grid.dims).astype(np.uint8)
        region_min, region_max = [0.5, 0.25, 1.0], [1.5, 1.75, 2.0]
        block = grid.states[2:6, 1:7, 4:8]
        oracle = np.count_nonzero(block == UNKNOWN) / block.size
        assert grid.unobserved_fraction(region_min, region_max) == pytest.approx(oracle)

    def test_disjoint_region_rejected(self):
        grid = OccupancyGrid.create([0, 0, 0], [1, 1, 1], voxel_size=0.25)
        with pytest.raises(InvalidRegionError):
            grid.unobserved_fraction([5, 5, 5], [6, 6, 6])

    def test_non_increasing_under_integration(self):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        scene = wall_scene()
        intr = intrinsics_from_fov(96, 72)
        last = 1.0
        for position in ([0, 0, 0], [0.3, 0.2, 0.4], [-0.5, -0.2, 0.8]):
            frame = make_frame(scene, Pose.look_at(position, [0, 0, 2.0]), intr, 0.0)
            grid.integrate_frame(frame, stride=2)
            fraction = grid.unobserved_fraction([-1, -1, 0], [1, 1, 3])
            assert fraction <= last
            last = fraction


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        grid = OccupancyGrid.create([-1, -1, 0], [1, 1, 3], voxel_size=0.25)
        grid.integrate_frame(wall_frame(), stride=2)
        path = tmp_path / "grid.bin"
        grid.save(path)
        loaded = OccupancyGrid.load(path)
        np.testing.assert_array_equal(loaded.states, grid.states)
        np.testing.assert_array_equal(loaded.origin, grid.origin)
        assert loaded.dims == grid.dims

    def test_states_rle(self):
        grid = OccupancyGrid.create([0, 0, 0], [1, 1, 0.25], voxel_size=0.25)
        assert grid.dims == (4, 4, 1)
        grid.states[0, :, 0] = FREE
        grid.states[1, 0, 0] = OCCUPIED
        rle = grid.states_rle()
        parts = [int(v) for v in rle.split()]
        states = np.repeat(parts[0::2], parts[1::2]).astype(np.uint8)
        np.testing.assert_array_equal(states, grid.states.reshape(-1))
