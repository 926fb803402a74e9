import numpy as np
import pytest

from flowface.controllers import (
    ControllerSet,
    anchor_landmarks,
    compute_controlling_weights,
    controllers_from_vertices,
    load_weights,
    save_weights,
)
from flowface.errors import WeightError
from flowface.fixtures import grid_mesh, random_surface_mesh, slit_mesh
from flowface.mesh import Mesh


def weights_dense(mesh, vertex_ids, k=10, metric="geodesic"):
    cset = controllers_from_vertices(mesh, vertex_ids)
    return compute_controlling_weights(mesh, cset, k=k, metric=metric)


class TestWeightBasics:
    def test_single_controller_gets_all_weight(self, rng):
        m = random_surface_mesh(rng, 40)
        cset = weights_dense(m, [7], k=10)
        w = cset.weights.toarray()
        assert np.allclose(w[:, 0], 1.0)

    def test_rows_sum_to_one(self, rng):
        m = random_surface_mesh(rng, 120)
        ids = rng.choice(m.n_vertices, size=15, replace=False)
        for metric in ("geodesic", "euclidean"):
            w = weights_dense(m, ids, k=10, metric=metric).weights
            rows = np.asarray(w.sum(axis=1)).ravel()
            np.testing.assert_allclose(rows, 1.0, atol=1e-9)

    def test_equidistant_pair_splits_evenly(self):
        # strip of 3 columns: middle column is one unit from each end column
        m = grid_mesh(3, 2, spacing=1.0)
        cset = weights_dense(m, [0, 2], k=2)
        w = cset.weights.toarray()
        assert w[1, 0] == pytest.approx(0.5, abs=1e-12)
        assert w[1, 1] == pytest.approx(0.5, abs=1e-12)

    def test_tie_break_prefers_lower_controller_index(self):
        m = grid_mesh(3, 2, spacing=1.0)
        w = weights_dense(m, [0, 2], k=1).weights.toarray()
        assert w[1, 0] == 1.0 and w[1, 1] == 0.0

    def test_controller_vertex_takes_weight_one(self, rng):
        m = random_surface_mesh(rng, 60)
        ids = [3, 11, 25]
        w = weights_dense(m, ids, k=3).weights.toarray()
        for col, v in enumerate(ids):
            assert w[v, col] == 1.0
            assert w[v].sum() == 1.0

    def test_fewer_controllers_than_k_uses_all(self, rng):
        m = random_surface_mesh(rng, 30)
        w = weights_dense(m, [0, 5], k=10).weights
        assert (np.asarray((w > 0).sum(axis=1)).ravel() <= 2).all()

    def test_at_most_k_nonzeros_per_row(self, rng):
        m = random_surface_mesh(rng, 150)
        ids = rng.choice(m.n_vertices, size=25, replace=False)
        w = weights_dense(m, ids, k=10).weights
        assert (np.asarray((w != 0).sum(axis=1)).ravel() <= 10).all()

    def test_zero_controllers_error(self, rng):
        m = random_surface_mesh(rng, 20)
        with pytest.raises(WeightError, match="empty"):
            compute_controlling_weights(m, ControllerSet(controllers=[]))

    def test_weights_nonnegative(self, rng):
        m = random_surface_mesh(rng, 80)
        ids = rng.choice(m.n_vertices, size=12, replace=False)
        assert weights_dense(m, ids).weights.min() >= 0.0

    def test_repeat_runs_bit_identical(self, rng):
        m = random_surface_mesh(rng, 100)
        ids = rng.choice(m.n_vertices, size=14, replace=False)
        first = weights_dense(m, ids).weights
        for _ in range(3):
            again = weights_dense(m, ids).weights
            assert np.array_equal(first.indptr, again.indptr)
            assert np.array_equal(first.indices, again.indices)
            assert np.array_equal(first.data, again.data)


class TestGeodesicVsEuclidean:
    def test_geodesic_dominates_euclidean(self, rng):
        from flowface.controllers import controller_distance_matrix

        m = random_surface_mesh(rng, 90)
        ids = rng.choice(m.n_vertices, size=8, replace=False)
        cset = controllers_from_vertices(m, ids)
        g = controller_distance_matrix(m, cset, "geodesic")
        e = controller_distance_matrix(m, cset, "euclidean")
        assert (g >= e - 1e-9).all()

    def test_slit_mesh_separation(self):
        fx = slit_mesh()
        cset = controllers_from_vertices(fx.mesh, fx.controller_vertices)
        geo = compute_controlling_weights(fx.mesh, cset, k=10, metric="geodesic")
        euc = compute_controlling_weights(fx.mesh, cset, k=10, metric="euclidean")
        wg = geo.weights.toarray()
        we = euc.weights.toarray()
        for u in fx.upper_vertices:
            facing = fx.facing_lower[int(u)]
            # the short hop across the slit is only available to euclidean weighting
            assert wg[u, facing] <= we[u, facing]
        n_geo_zero = sum(1 for u in fx.upper_vertices if wg[u, fx.facing_lower[int(u)]] == 0.0)
        n_euc_pos = sum(1 for u in fx.upper_vertices if we[u, fx.facing_lower[int(u)]] > 0.0)
        assert n_geo_zero > n_euc_pos  # sign of the difference

    def test_unknown_metric_rejected(self, rng):
        m = random_surface_mesh(rng, 20)
        with pytest.raises(WeightError, match="metric"):
            weights_dense(m, [0], metric="manhattan")


class TestDisconnectedMeshes:
    def test_unreachable_vertices_get_zero_rows(self):
        m = Mesh(
            vertices=[(0, 0, 0), (1, 0, 0), (0, 1, 0), (9, 9, 0), (10, 9, 0), (9, 10, 0)],
            faces=[(0, 1, 2), (3, 4, 5)],
        )
        with pytest.warns(UserWarning):
            cset = weights_dense(m, [0], k=10)
        w = cset.weights.toarray()
        assert np.allclose(w[:3, 0], 1.0)
        assert (w[3:] == 0.0).all()
        assert cset.zero_weight_vertices == 3


class TestAnchoring:
    def test_landmarks_anchor_to_projected_vertices(self):
        from flowface.camera import standard_perspective
        from flowface.fixtures import face_patch_mesh

        mesh = face_patch_mesh()
        camera = standard_perspective(60.0, 128, 128, near=0.5, far=6.0)
        target = [0, 57, 230, 499]
        proj = camera.project(mesh.vertices[target])
        landmarks = [
            {"id": i, "x_px": float(p[0]), "y_px": float(p[1])} for i, p in enumerate(proj)
        ]
        cset = anchor_landmarks(mesh, landmarks, camera)
        assert [c.vertex for c in cset.controllers] == target
        assert cset.dropped_landmarks == 0

    def test_landmarks_outside_image_are_dropped_and_counted(self):
        from flowface.camera import standard_perspective
        from flowface.fixtures import face_patch_mesh

        mesh = face_patch_mesh()
        camera = standard_perspective(60.0, 128, 128, near=0.5, far=6.0)
        proj = camera.project(mesh.vertices[[10]])
        landmarks = [
            {"id": 0, "x_px": -40.0, "y_px": 10.0},
            {"id": 1, "x_px": float(proj[0, 0]), "y_px": float(proj[0, 1])},
            {"id": 2, "x_px": 6000.0, "y_px": 6000.0},
        ]
        cset = anchor_landmarks(mesh, landmarks, camera)
        assert len(cset) == 1
        assert cset.dropped_landmarks == 2

    def test_far_landmark_dropped_by_anchor_threshold(self):
        from flowface.camera import standard_perspective
        from flowface.fixtures import face_patch_mesh

        mesh = face_patch_mesh()
        camera = standard_perspective(60.0, 128, 128, near=0.5, far=6.0)
        # the patch projects to the image center region; a border pixel is far away
        landmarks = [{"id": 0, "x_px": 1.0, "y_px": 1.0}]
        cset = anchor_landmarks(mesh, landmarks, camera, max_px=3.0)
        assert len(cset) == 0
        assert cset.dropped_landmarks == 1


class TestWeightFile:
    def test_save_load_round_trip(self, rng, tmp_path):
        m = random_surface_mesh(rng, 70)
        ids = rng.choice(m.n_vertices, size=9, replace=False)
        cset = weights_dense(m, ids, k=5)
        path = tmp_path / "weights.json"
        save_weights(cset, path)
        loaded = load_weights(path)
        assert loaded.k == 5 and loaded.metric == "geodesic"
        assert [c.vertex for c in loaded.controllers] == [c.vertex for c in cset.controllers]
        assert np.array_equal(loaded.weights.toarray(), cset.weights.toarray())

    def test_save_without_weights_rejected(self, rng):
        m = random_surface_mesh(rng, 20)
        with pytest.raises(WeightError, match="no weights"):
            save_weights(controllers_from_vertices(m, [0]), "/tmp/nope.json")
