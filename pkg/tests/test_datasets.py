import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kdematrix import Kernel, KernelSpec, exact_sum
from kdematrix.datasets import (
    DatasetError,
    DatasetSource,
    duplicate_count,
    far_spacing,
    gen_clique_instance,
    gen_clustered,
    gen_duplicate_instance,
    gen_far_apart,
    gen_mixture,
    load_dataset,
)


def write(tmp_path, text, name="data.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoad:
    def test_csv(self, tmp_path):
        pts = load_dataset(DatasetSource(write(tmp_path, "0,0\n1,1\n")))
        assert_allclose(pts.points, [[0, 0], [1, 1]])

    def test_csv_header_comments_blank_lines(self, tmp_path):
        text = "x,y\n# note\n\n1.5,2\n3,-4e-1\n"
        assert_allclose(load_dataset(DatasetSource(write(tmp_path, text))).points, [[1.5, 2], [3, -0.4]])

    def test_libsvm(self, tmp_path):
        pts = load_dataset(DatasetSource(write(tmp_path, "3 1:0.5 4:1.0\n"), "libsvm"))
        assert_allclose(pts.points, [[0.5, 0.0, 0.0, 1.0]])

    def test_libsvm_fixed_dim_and_filter(self, tmp_path):
        path = write(tmp_path, "1 2:1\n2 1:3\n1 3:2\n")
        pts = load_dataset(DatasetSource(path, "libsvm", class_filter=1, dim=5))
        assert_allclose(pts.points, [[0, 1, 0, 0, 0], [0, 0, 2, 0, 0]])
        with pytest.raises(DatasetError):
            load_dataset(DatasetSource(path, "libsvm", dim=2))

    def test_whitespace_with_labels(self, tmp_path):
        pts = load_dataset(DatasetSource(write(tmp_path, "1 2 0\n3  4 1\n"), "whitespace", has_labels=True))
        assert_allclose(pts.points, [[1, 2], [3, 4]])

    def test_class_filter_matches_line_scan(self, tmp_path, rng):
        # covertype layout: 54 features then an integer class label
        rows = rng.integers(0, 50, size=(300, 54))
        labels = rng.integers(1, 8, size=300)
        text = "\n".join(",".join(map(str, r)) + f",{c}" for r, c in zip(rows, labels)) + "\n"
        path = write(tmp_path, text)
        for cls in (3, 5):
            pts = load_dataset(DatasetSource(path, class_filter=cls))
            expected = sum(1 for line in path.read_text().splitlines() if line.rsplit(",", 1)[1] == str(cls))
            assert pts.n == expected and pts.d == 54
            assert_allclose(pts.points, rows[labels == cls])

    def test_normalize(self, tmp_path):
        pts = load_dataset(DatasetSource(write(tmp_path, "0,5\n2,5\n4,5\n"), normalize=True))
        assert_allclose(pts.points, [[0, 0], [0.5, 0], [1, 0]])

    @pytest.mark.parametrize("text, fmt, line", [
        ("1,2\n3,x\n", "csv", 2),
        ("1,2\n3\n", "csv", 2),
        ("1 1:2\n1 zz\n", "libsvm", 2),
        ("a 1:2\n", "libsvm", 1),
        ("1 0:2\n", "libsvm", 1),
    ])
    def test_parse_errors_report_line(self, tmp_path, text, fmt, line):
        with pytest.raises(DatasetError) as info:
            load_dataset(DatasetSource(write(tmp_path, text), fmt))
        assert info.value.line == line

    def test_non_integer_label(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(DatasetSource(write(tmp_path, "1,2,0.5\n"), has_labels=True))

    def test_empty_after_filter(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(DatasetSource(write(tmp_path, "1,2,1\n"), class_filter=9))

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            DatasetSource(tmp_path / "x", "parquet")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_dataset(DatasetSource(tmp_path / "missing.csv"))


class TestGenerators:
    def test_far_apart_is_negligible(self, rng):
        for spec in (KernelSpec("gaussian", 0.5), KernelSpec("laplacian", 2.0), KernelSpec("exponential", 1.0)):
            X = gen_far_apart(60, 2, rng, spec.bandwidth)
            K = Kernel(spec).pairwise(X, X)
            assert np.max(K - np.eye(60)) < 1e-15
        assert far_spacing(1.0) == pytest.approx(20 * math.sqrt(52 * math.log(2)))

    def test_duplicate_sizes(self, rng):
        assert duplicate_count(800, 2.0) == 57
        X = gen_duplicate_instance(800, 2, 2.0, rng)
        _, counts = np.unique(X.points, axis=0, return_counts=True)
        assert counts.max() == 57 and counts.size == 800 - 56

    @pytest.mark.parametrize("n, C", [(200, 0.0), (800, 2.0), (300, 5.0)])
    def test_duplicate_sum(self, n, C, rng):
        X = gen_duplicate_instance(n, 2, C, rng)
        dup = duplicate_count(n, C)
        assert exact_sum(X, Kernel()) == pytest.approx(n + dup * (dup - 1), abs=1e-9)

    def test_duplicate_rejects(self, rng):
        with pytest.raises(ValueError):
            gen_duplicate_instance(4, 1, 3.0, rng)

    def test_clique(self, rng):
        X = gen_clique_instance(100, 2, 10, rng)
        _, counts = np.unique(X.points, axis=0, return_counts=True)
        assert counts.max() == 10
        with pytest.raises(ValueError):
            gen_clique_instance(5, 2, 6, rng)

    def test_mixture_and_clustered(self, rng):
        assert gen_mixture(50, 3, rng).points.shape == (50, 3)
        with pytest.raises(ValueError):
            gen_mixture(10, 2, rng, components=2, weights=[1.0])
        X = gen_clustered(1000, 3, rng)
        assert X.points.shape == (1000, 3)
        with pytest.raises(ValueError):
            gen_clustered(10, 2, rng, cluster_sizes=(0.7, 0.7))

    def test_seeded_generators_repeat(self):
        a = gen_mixture(20, 2, np.random.default_rng(3)).points
        b = gen_mixture(20, 2, np.random.default_rng(3)).points
        assert np.array_equal(a, b)
