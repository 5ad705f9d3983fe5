import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_blob
from hipgraf.curvefit import (
    FitConfig,
    PolyCoeffs,
    cosine_similarity,
    curve_similarity,
    fit_cubic,
    split_boundary,
    ss_score,
)
from hipgraf.errors import (
    SingularFitError,
    StructureMismatchError,
    TooNarrowError,
    UndefinedSimilarityError,
)
from hipgraf.geometry import Contour, extract_contours
from hipgraf.imgio import BinaryMask, StructureSet


def disk_mask(w, h, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return BinaryMask((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)


def rect_mask(w, h, x0, x1, y0, y1):
    arr = np.zeros((h, w), bool)
    arr[y0:y1 + 1, x0:x1 + 1] = True
    return BinaryMask(arr)


def ridge_oracle(x, y, xi):
    """Augmented least squares: ridge == lstsq on [X; sqrt(xi) I] vs [y; 0]."""
    lo, hi = x.min(), x.max()
    t = (x - (hi + lo) / 2) / ((hi - lo) / 2)
    X = np.column_stack([t ** 3, t ** 2, t, np.ones_like(t)])
    A = np.vstack([X, math.sqrt(xi) * np.eye(4)])
    b = np.concatenate([y, np.zeros(4)])
    return np.linalg.lstsq(A, b, rcond=None)[0]


class TestSplitBoundary:
    def test_rectangle(self):
        c = extract_contours(rect_mask(30, 20, 5, 20, 4, 12))[0]
        s = split_boundary(c)
        assert [p[1] for p in s.upper] == [4.0] * 16
        assert [p[1] for p in s.lower] == [12.0] * 16
        assert [p[0] for p in s.upper] == list(np.arange(5.0, 21.0))
        # cut points: (min x, smallest y) and (max x, smallest y)
        assert s.upper_arc[0] == (5.0, 4.0) and s.lower_arc[0] == (5.0, 4.0)
        assert s.upper_arc[-1] == (20.0, 4.0) and s.lower_arc[-1] == (20.0, 4.0)

    def test_circle(self):
        c = extract_contours(disk_mask(40, 40, 20, 20, 10))[0]
        s = split_boundary(c)
        xs_u = [p[0] for p in s.upper]
        assert xs_u[0] == 10 and xs_u[-1] == 30
        assert xs_u == sorted(xs_u)
        for (xu, yu), (xl, yl) in zip(s.upper, s.lower):
            assert xu == xl
            # mirror symmetry about y = 20
            assert yu + yl == pytest.approx(40)
        assert all(y <= 20 for _, y in s.upper)
        assert all(y >= 20 for _, y in s.lower)

    def test_arcs_cover_contour_random_blobs(self, rng):
        for _ in range(100):
            c = extract_contours(random_blob(rng, 48, 48))[0]
            s = split_boundary(c)
            assert set(s.upper_arc) | set(s.lower_arc) == set(c.points)
            ends = {s.upper_arc[0], s.upper_arc[-1]}
            assert ends == {s.lower_arc[0], s.lower_arc[-1]}
            assert ends <= set(s.upper_arc) & set(s.lower_arc)
            # deduplicated curves are sorted with one point per column
            for curve in (s.upper, s.lower):
                xs = [p[0] for p in curve]
                assert xs == sorted(set(xs))

    def test_too_few_points(self):
        with pytest.raises(TooNarrowError):
            split_boundary(Contour(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0))))

    def test_too_narrow(self):
        c = extract_contours(rect_mask(20, 30, 5, 7, 2, 25))[0]
        with pytest.raises(TooNarrowError):
            split_boundary(c)


class TestFitCubic:
    def test_exact_cubic(self):
        t = np.linspace(-1, 1, 15)
        pts = np.column_stack([t, 2 * t ** 3 - t + 5])
        f = fit_cubic(pts, FitConfig(xi=0.0))
        assert np.allclose(f.theta, [2, 0, -1, 5], atol=1e-9)
        assert np.array_equal(f.f_vector, f.theta[:3])

    def test_exact_cubic_in_pixel_coordinates(self):
        # pixel x in [100, 140] maps onto [-1, 1]
        x = np.arange(100, 141, dtype=float)
        t = (x - 120) / 20
        f = fit_cubic(np.column_stack([x, 2 * t ** 3 - t + 5]), FitConfig(xi=0.0))
        assert np.allclose(f.theta, [2, 0, -1, 5], atol=1e-9)
        assert np.allclose(f(x), 2 * t ** 3 - t + 5, atol=1e-9)

    def test_ridge_shrinks(self):
        t = np.linspace(-1, 1, 15)
        pts = np.column_stack([t, 2 * t ** 3 - t + 5])
        n0 = np.linalg.norm(fit_cubic(pts, FitConfig(xi=0.0)).theta)
        n10 = np.linalg.norm(fit_cubic(pts, FitConfig(xi=10.0)).theta)
        assert n10 < n0

    def test_matches_augmented_lstsq(self, rng):
        for _ in range(50):
            x = np.sort(rng.uniform(0, 100, 20))
            y = 0.01 * x ** 3 - 0.3 * x ** 2 + x + rng.normal(0, 2, 20)
            got = fit_cubic(np.column_stack([x, y]), FitConfig(xi=1e-3)).theta
            assert np.allclose(got, ridge_oracle(x, y, 1e-3), rtol=0, atol=1e-9)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_ridge_monotone(self, seed):
        r = np.random.default_rng(seed)
        pts = np.column_stack([r.uniform(-5, 5, 12), r.normal(0, 3, 12)])
        norms = [np.linalg.norm(fit_cubic(pts, FitConfig(xi=xi)).theta)
                 for xi in (0.0, 1e-3, 1e-1, 1.0, 10.0, 100.0)]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_singular_at_zero_xi(self):
        pts = [(0, 0), (0, 1), (1, 1), (1, 2), (0, 3)]
        with pytest.raises(SingularFitError):
            fit_cubic(pts, FitConfig(xi=0.0))
        fit_cubic(pts, FitConfig(xi=1e-3))

    def test_too_few(self):
        with pytest.raises(TooNarrowError):
            fit_cubic([(0, 0), (1, 1), (2, 2)])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(xi=-1)
        with pytest.raises(ValueError):
            FitConfig(min_points=3)


class TestCosine:
    def test_examples(self):
        assert cosine_similarity((1, 2, 3), (1, 2, 3)) == 1.0
        assert cosine_similarity((1, 0, 0), (0, 1, 0)) == 0.0
        assert cosine_similarity((1, 1, 0), (1, 0, 0)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(UndefinedSimilarityError):
            cosine_similarity((0, 0, 0), (1, 0, 0))

    def test_flat_curve_convention(self):
        assert curve_similarity((0, 0, 0), (0, 0, 0)) == 1.0
        assert curve_similarity((0, 0, 0), (1, 0, 0)) == 0.0

    vec = st.lists(st.floats(-100, 100), min_size=3, max_size=3).filter(
        lambda v: np.linalg.norm(v) > 1e-3)

    @given(vec, vec, st.floats(0.01, 100))
    @settings(max_examples=200, deadline=None)
    def test_invariances(self, u, v, k):
        base = cosine_similarity(u, v)
        assert 0.0 <= base <= 1.0
        assert cosine_similarity(np.multiply(u, k), v) == pytest.approx(base, abs=1e-9)
        assert cosine_similarity(np.negative(u), v) == pytest.approx(base, abs=1e-12)
        assert cosine_similarity(u, np.negative(v)) == pytest.approx(base, abs=1e-12)
        assert cosine_similarity(u, np.multiply(u, -k)) == pytest.approx(1.0, abs=1e-12)


def blob_set(rng, w=64, h=64):
    return StructureSet(
        flat_ilium=random_blob(rng, w, h, 20, 20),
        lower_limb=random_blob(rng, w, h, 40, 20),
        labrum=random_blob(rng, w, h, 20, 40),
        co_junction=random_blob(rng, w, h, 40, 40),
    )


class TestSSScore:
    def test_self_is_zero(self, rng):
        for _ in range(10):
            s = blob_set(rng)
            r = ss_score(s, s)
            assert r.total == 0.0
            assert r.skipped == []

    def test_translation(self, rng):
        s = blob_set(rng, 80, 64)
        r = ss_score(s.shifted(5, 0), s)
        assert r.total == pytest.approx(0.0, abs=1e-6)

    def test_sign_flip_is_similar(self):
        t = np.linspace(-1, 1, 21)
        up = fit_cubic(np.column_stack([t, t ** 2]), FitConfig(xi=0.0))
        down = fit_cubic(np.column_stack([t, -t ** 2]), FitConfig(xi=0.0))
        assert np.allclose(up.f_vector, [0, 1, 0], atol=1e-9)
        assert curve_similarity(up.f_vector, down.f_vector) == pytest.approx(1.0, abs=1e-12)
        assert curve_similarity(PolyCoeffs(0, 1, 0, 0).f_vector, PolyCoeffs(0, -1, 0, 0).f_vector) == 1.0

    def test_range_and_skips(self, rng):
        a = blob_set(rng)
        b = blob_set(rng)
        a = StructureSet(a.flat_ilium, a.lower_limb, a.labrum, None)
        b = StructureSet(b.flat_ilium, b.lower_limb, b.labrum, None)
        r = ss_score(a, b)
        assert r.skipped == ["co_junction"]
        assert 0.0 <= r.total <= 3.0
        assert all(0.0 <= v <= 1.0 for v in r.per_structure.values() if v is not None)

    def test_mismatch(self, rng):
        a = blob_set(rng)
        b = StructureSet(a.flat_ilium, a.lower_limb, a.labrum, None)
        with pytest.raises(StructureMismatchError):
            ss_score(a, b)
        with pytest.raises(StructureMismatchError):
            ss_score(b, a)

    def test_orthogonal_curves_penalised(self):
        # upper curve parabolic vs straight sloped line
        arr1 = np.zeros((60, 60), bool)
        arr2 = np.zeros((60, 60), bool)
        for x in range(10, 51):
            t = (x - 30) / 20
            arr1[int(round(30 - 10 * (1 - t * t))):40, x] = True
            arr2[int(round(25 + 10 * t)):40, x] = True
        s1 = StructureSet(flat_ilium=BinaryMask(arr1))
        s2 = StructureSet(flat_ilium=BinaryMask(arr2))
        r = ss_score(s1, s2)
        assert r.per_structure["flat_ilium"] > 0.2
