from __future__ import annotations

import io
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherepack.errors import DegenerateMesh, NumericalAmbiguity, ParseError, RejectionBudgetExceeded
from spherepack.geometry import (NotWatertightWarning, SampleSet, TriangleMesh, compute_volume,
                                 contains_point, contains_points, load_mesh, sample_interior,
                                 sample_surface, sample_surface_faces)
from spherepack.testkit import convex_contains, divergence_volume, icosphere_shape, tetrahedron

from .conftest import obj_text


def _rotation(seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    return q * np.sign(np.linalg.det(q))


class TestLoadMesh:
    def test_cube_obj_volume(self, cube):
        mesh = load_mesh(obj_text(cube).encode(), format="obj")
        assert len(mesh.faces) == 12
        assert mesh.volume == pytest.approx(1.0, abs=1e-9)
        assert mesh.watertight

    def test_index_out_of_range(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 2 4\nf 1 3 4\nf 2 3 9\n"
        with pytest.raises(ParseError):
            load_mesh(text.encode(), format="obj")

    def test_icosphere_volume_matches_divergence_oracle(self, sphere_mesh):
        mesh = load_mesh(obj_text(sphere_mesh).encode(), format="obj")
        oracle = divergence_volume(mesh.vertices, mesh.faces)
        assert mesh.volume == pytest.approx(oracle, abs=1e-9)

    def test_too_few_faces(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        with pytest.raises(DegenerateMesh):
            load_mesh(text.encode(), format="obj")

    def test_flat_mesh_is_degenerate(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\nf 1 3 2\nf 2 3 4\n"
        with pytest.raises(DegenerateMesh):
            load_mesh(text.encode(), format="obj")

    def test_open_mesh_warns(self, cube):
        text = "\n".join(obj_text(cube).splitlines()[:-1]) + "\n"
        with pytest.warns(NotWatertightWarning):
            load_mesh(text.encode(), format="obj")

    def test_quads_are_fan_triangulated(self):
        text = """v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8
"""
        mesh = load_mesh(text.encode(), format="obj")
        assert len(mesh.faces) == 12
        assert mesh.volume == pytest.approx(1.0)

    def test_obj_slash_and_negative_indices(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\n"
        text += "f 1//1 3//1 2//1\nf -4/1/1 -3 -1\nf 1 4 3\nf 2 3 4\n"
        mesh = load_mesh(text.encode(), format="obj")
        assert mesh.volume == pytest.approx(1 / 6)

    def test_malformed_obj(self):
        with pytest.raises(ParseError):
            load_mesh(b"v 0 0 zero\n", format="obj")

    def test_binary_and_ascii_stl(self, cube):
        tri = cube.vertices[cube.faces]
        buf = io.BytesIO()
        buf.write(b"\0" * 80 + struct.pack("<I", len(tri)))
        for t in tri:
            buf.write(struct.pack("<12fH", 0, 0, 0, *t.ravel(), 0))
        binary = load_mesh(buf.getvalue(), format="stl")
        assert len(binary.vertices) == 8 and binary.volume == pytest.approx(1.0)

        lines = ["solid cube"]
        for t in tri:
            lines += ["facet normal 0 0 0", "outer loop"]
            lines += ["vertex %r %r %r" % tuple(v) for v in t.tolist()]
            lines += ["endloop", "endfacet"]
        lines.append("endsolid cube")
        ascii_mesh = load_mesh("\n".join(lines).encode(), format="stl")
        assert ascii_mesh.volume == pytest.approx(1.0)
        assert ascii_mesh.watertight

    def test_scale_and_path(self, cube_obj):
        mesh = load_mesh(cube_obj, scale=1e-3)
        assert mesh.volume == pytest.approx(1e-9)

    def test_unknown_format(self):
        with pytest.raises(ParseError):
            load_mesh(b"whatever", format="ply")


class TestTriangleMesh:
    def test_invariants(self, sphere_mesh):
        assert np.allclose(np.linalg.norm(sphere_mesh.face_normals, axis=1), 1.0, atol=1e-9)
        assert np.all(sphere_mesh.face_areas >= 0)
        centroids = sphere_mesh.triangles.mean(axis=1)
        # outward normals on a convex shape around the origin
        assert np.all(np.einsum("ij,ij->i", centroids, sphere_mesh.face_normals) > 0)

    def test_inverted_winding_is_repaired(self, cube):
        flipped = TriangleMesh(cube.vertices, cube.faces[:, ::-1])
        assert flipped.volume == pytest.approx(1.0)
        assert np.allclose(flipped.face_normals, cube.face_normals)

    def test_mesh_id_is_content_hash(self, cube):
        same = TriangleMesh(cube.vertices.copy(), cube.faces.copy())
        moved = cube.transformed(offset=(1e-9, 0, 0))
        assert same.mesh_id == cube.mesh_id
        assert moved.mesh_id != cube.mesh_id

    def test_arrays_read_only(self, cube):
        with pytest.raises(ValueError):
            cube.vertices[0, 0] = 5.0


class TestComputeVolume:
    def test_examples(self, cube):
        assert compute_volume(cube) == pytest.approx(1.0, abs=1e-12)
        assert compute_volume(cube.transformed(scale=2.0)) == pytest.approx(8.0, abs=1e-12)
        assert compute_volume(tetrahedron().mesh) == pytest.approx(1 / 6, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_rigid_invariance(self, sphere_mesh, seed):
        moved = sphere_mesh.transformed(matrix=_rotation(seed), offset=(3.0, -2.0, 7.5))
        assert compute_volume(moved) == pytest.approx(compute_volume(sphere_mesh), rel=1e-9)


class TestContains:
    def test_cube_examples(self, cube):
        assert contains_point(cube, (0.5, 0.5, 0.5))
        assert not contains_point(cube, (1.5, 0.5, 0.5))

    def test_icosphere_near_face_center(self, sphere_mesh):
        tri = sphere_mesh.triangles
        rng = np.random.default_rng(0)
        for f in rng.choice(len(tri), 20, replace=False):
            d = tri[f].mean(axis=0)
            p = 0.999 * d / np.linalg.norm(d)
            expected = bool(convex_contains(sphere_mesh, p)[0])
            assert contains_point(sphere_mesh, p) == expected

    def test_agrees_with_convex_oracle(self, sphere_mesh):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1.1, 1.1, (3000, 3))
        assert np.array_equal(contains_points(sphere_mesh, pts), convex_contains(sphere_mesh, pts))

    def test_vertices_and_edges_resolve(self, cube):
        # grid-aligned points sit exactly on the cube's edge and diagonal planes
        g = np.linspace(0.0, 1.0, 5)
        pts = np.array([(x, y, z) for x in g for y in g for z in g])
        interior = np.all((pts > 0) & (pts < 1), axis=1)
        assert np.array_equal(contains_points(cube, pts), interior)

    def test_surface_points_are_not_strictly_inside(self, cube):
        assert not contains_point(cube, (0.0, 0.3, 0.6))
        assert not contains_point(cube, (1.0, 1.0, 1.0))

    def test_ambiguity_error_type(self):
        assert issubclass(NumericalAmbiguity, Exception)

    def test_rotated_mesh(self, sphere_mesh):
        rot = _rotation(9)
        moved = sphere_mesh.transformed(matrix=rot, offset=(0.2, 0.1, -0.3))
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1.05, 1.05, (2000, 3))
        expected = contains_points(sphere_mesh, pts)
        moved_pts = pts @ rot.T + np.array([0.2, 0.1, -0.3])
        # the ray grid differs after rotation, so allow only true boundary grazers to differ
        assert np.mean(contains_points(moved, moved_pts) == expected) > 0.999


class TestSampling:
    def test_face_counts_binomial(self, cube):
        _, _, face = sample_surface_faces(cube, 6000, seed=7)
        per_side = np.bincount(face // 2, minlength=6)
        assert np.all(np.abs(per_side - 1000) <= 120)

    def test_chi_square_face_density(self, cube):
        from scipy.stats import chisquare
        _, _, face = sample_surface_faces(cube, 100_000, seed=11)
        counts = np.bincount(face, minlength=12)
        expected = cube.face_areas / cube.face_areas.sum() * 100_000
        assert chisquare(counts, expected).pvalue > 1e-3

    def test_single_sample_on_face_plane(self, sphere_mesh):
        pts, normals, face = sample_surface_faces(sphere_mesh, 1, seed=4)
        a = sphere_mesh.triangles[face[0], 0]
        assert abs((pts[0] - a) @ normals[0]) < 1e-9

    def test_surface_determinism(self, cube):
        a = sample_surface(cube, 500, 3)
        b = sample_surface(cube, 500, 3)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_degenerate_faces_are_never_sampled(self):
        v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0.5, 0.5, 0)]
        f = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3), (1, 4, 2)]
        mesh = TriangleMesh(v, f)
        assert mesh.degenerate.tolist() == [False] * 4 + [True]
        _, _, face = sample_surface_faces(mesh, 2000, seed=0)
        assert 4 not in face

    def test_interior_cube(self, cube):
        pts = sample_interior(cube, 100_000, seed=3)
        assert np.all((pts > 0) & (pts < 1))
        assert np.all(np.abs(pts.mean(axis=0) - 0.5) <= 0.01)

    def test_interior_sphere_shell_fraction(self, sphere_mesh):
        pts = sample_interior(sphere_mesh, 50_000, seed=8)
        frac = np.mean(np.linalg.norm(pts, axis=1) < 0.5)
        assert frac == pytest.approx(0.125, abs=0.01)

    def test_interior_points_are_inside(self, sphere_mesh):
        pts = sample_interior(sphere_mesh, 2000, seed=1)
        assert contains_points(sphere_mesh, pts).all()

    def test_interior_determinism(self, cube):
        assert np.array_equal(sample_interior(cube, 300, 9), sample_interior(cube, 300, 9))

    def test_rejection_guard(self):
        sliver = icosphere_shape(2, 1.0).mesh.transformed(matrix=np.diag([1.0, 1.0, 1e-5]))
        # thin but still fills its own bounding box; needle inside a large box does not
        big = TriangleMesh(np.vstack([sliver.vertices, [[50, 50, 50], [50, 50, 50.0]]]), sliver.faces)
        with pytest.raises(RejectionBudgetExceeded):
            sample_interior(big, 10, 0)

    def test_sample_set(self, cube):
        s = SampleSet.draw(cube, 100, 200, seed=1)
        assert s.interior_points.shape == (100, 3)
        assert s.surface_points.shape == s.surface_normals.shape == (200, 3)
        assert np.allclose(np.linalg.norm(s.surface_normals, axis=1), 1.0, atol=1e-9)
        with pytest.raises(ValueError):
            SampleSet(s.interior_points, s.surface_points, s.surface_normals[:5])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50))
def test_sampling_is_pure(seed, n):
    mesh = tetrahedron().mesh
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = sample_interior(mesh, n, seed)
    b = sample_interior(mesh, n, seed)
    assert np.array_equal(a, b)
    assert contains_points(mesh, a).all()
