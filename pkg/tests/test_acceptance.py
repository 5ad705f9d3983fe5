"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a red criterion still shows its measured value.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_RESULTS, random_blob
from hipgraf.cli import main
from hipgraf.curvefit import FitConfig, cosine_similarity, fit_cubic, ss_score
from hipgraf.imgio import BinaryMask, LandmarkPoint, LandmarkSet, StructureSet
from hipgraf.measure import (
    TYPE_I,
    TYPE_II,
    br_distance,
    classify,
    fuse_landmarks,
    infer_landmarks_from_masks,
    measure_scene,
)
from hipgraf.metrics import dsc, hausdorff, pearson, two_sample_t
from hipgraf.phantom import PhantomSpec, generate, generate_batch

pytestmark = pytest.mark.slow


def record(name, ok, detail):
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def test_01_phantom_round_trip():
    t0 = time.perf_counter()
    scenes = generate_batch(200, alpha_range=(45.0, 75.0), beta_range=(35.0, 80.0), seed=2024)
    errs = []
    for sc in scenes:
        r = measure_scene(sc.structures, sc.predicted_landmarks)
        errs.append(max(abs(r.alpha - sc.alpha_true), abs(r.beta - sc.beta_true)))
    elapsed = time.perf_counter() - t0
    errs = np.array(errs)
    within_half = float(np.mean(errs <= 0.5))
    within_one = float(np.mean(errs <= 1.0))
    ok = within_half >= 0.99 and within_one == 1.0 and elapsed < 60.0
    record("1 phantom round-trip", ok,
           f"<=0.5deg {within_half:.3f}, <=1.0deg {within_one:.3f}, max {errs.max():.3f}deg, {elapsed:.1f}s")


def _pixels(m):
    return np.argwhere(m.data).astype(float)


def test_02_metric_oracles():
    rng = np.random.default_rng(7)
    worst_dsc = worst_hd = 0.0
    for _ in range(500):
        h, w = rng.integers(1, 33, size=2)
        a = rng.random((h, w)) < rng.uniform(0.02, 0.6)
        b = rng.random((h, w)) < rng.uniform(0.02, 0.6)
        a[rng.integers(h), rng.integers(w)] = True
        b[rng.integers(h), rng.integers(w)] = True
        ma, mb = BinaryMask(a), BinaryMask(b)
        inter = sum(1 for y in range(h) for x in range(w) if a[y, x] and b[y, x])
        ref_dsc = 2 * inter / (a.sum() + b.sum())
        pa, pb = _pixels(ma), _pixels(mb)
        d = np.sqrt(((pa[:, None] - pb[None]) ** 2).sum(-1))
        ref_hd = max(d.min(1).max(), d.min(0).max())
        worst_dsc = max(worst_dsc, abs(dsc(ma, mb) - ref_dsc))
        worst_hd = max(worst_hd, abs(hausdorff(ma, mb) - ref_hd))
    record("2 metric oracles", worst_dsc <= 1e-12 and worst_hd <= 1e-9,
           f"max |dDSC| {worst_dsc:.1e}, max |dHD| {worst_hd:.1e} over 500 pairs")


def test_03_ridge_fit():
    rng = np.random.default_rng(3)
    worst = 0.0
    monotone = True
    for _ in range(100):
        coef = rng.uniform(-5, 5, 4)
        n = int(rng.integers(8, 40))
        x = np.sort(rng.uniform(-50, 200, n))
        while np.unique(x).size < 4:
            x = np.sort(rng.uniform(-50, 200, n))
        lo, hi = x.min(), x.max()
        t = (x - (lo + hi) / 2) / ((hi - lo) / 2)
        y = np.polyval(coef, t)
        pts = np.column_stack([x, y])
        worst = max(worst, float(np.abs(fit_cubic(pts, FitConfig(xi=0.0)).theta - coef).max()))
        norms = [np.linalg.norm(fit_cubic(pts, FitConfig(xi=xi)).theta) for xi in (0.0, 1e-3, 1e-1, 10.0)]
        monotone &= all(a >= b for a, b in zip(norms, norms[1:]))
    record("3 ridge fit", worst <= 1e-9 and monotone,
           f"max coefficient error {worst:.1e}, norm monotone in xi: {monotone}")


def test_04_ss_properties():
    rng = np.random.default_rng(4)
    self_max = 0.0
    in_range = True
    for _ in range(100):
        s = StructureSet(*(random_blob(rng, 64, 64, cx, cy)
                           for cx, cy in ((20, 20), (44, 20), (20, 44), (44, 44))))
        r = ss_score(s, s)
        self_max = max(self_max, r.total)
        other = StructureSet(*(random_blob(rng, 64, 64, cx, cy)
                               for cx, cy in ((20, 20), (44, 20), (20, 44), (44, 44))))
        q = ss_score(s, other)
        in_range &= all(0.0 <= v <= 1.0 for v in q.per_structure.values()) and 0 <= q.total <= 4
    inv = 0.0
    for _ in range(1000):
        u, v = rng.normal(size=(2, 3))
        k = rng.uniform(0.1, 10)
        base = cosine_similarity(u, v)
        for alt in (cosine_similarity(k * u, v), cosine_similarity(u, k * v),
                    cosine_similarity(-u, v), cosine_similarity(u, -v)):
            inv = max(inv, abs(alt - base))
    record("4 SS properties", self_max == 0.0 and inv <= 1e-12 and in_range,
           f"max ss(X,X) {self_max:.1e}, max invariance gap {inv:.1e}, terms in [0,1]: {in_range}")


def test_05_br_and_fusion():
    rng = np.random.default_rng(5)
    axioms = True
    for a, b, c in rng.uniform(-500, 500, size=(1000, 3, 2)):
        axioms &= br_distance(a, b) == br_distance(b, a)
        axioms &= br_distance(a, a) == 0.0 and (br_distance(a, b) > 0) == (not np.array_equal(a, b))
        axioms &= br_distance(a, c) <= br_distance(a, b) + br_distance(b, c) + 1e-9
    midpoint = True
    for a, b in rng.uniform(0, 512, size=(1000, 2, 2)):
        s = LandmarkSet(*(LandmarkPoint(*a, "mask_derived") for _ in range(3)))
        k = LandmarkSet(*(LandmarkPoint(*b, "predicted") for _ in range(3)))
        p = fuse_landmarks(s, k)[0].p1_bony_rim
        midpoint &= p.x == (a[0] + b[0]) / 2 and p.y == (a[1] + b[1]) / 2
    brs = []
    for sc in generate_batch(20, seed=5, template=PhantomSpec(fused_structures=True)):
        derived, _ = infer_landmarks_from_masks(sc.structures)
        brs.append(br_distance(derived.p1_bony_rim, sc.predicted_landmarks.p1_bony_rim))
    finite = all(math.isfinite(v) for v in brs)
    record("5 BR/fusion", axioms and midpoint and finite,
           f"metric axioms {axioms}, exact midpoints {midpoint}, fused-mode BR mean {np.mean(brs):.3f}px")


def test_06_graf_classification():
    exact = classify(60.0) == TYPE_I and classify(59.999) == TYPE_II
    sc = generate(PhantomSpec(alpha_true=60.0, beta_true=55.0))
    base = measure_scene(sc.structures, sc.predicted_landmarks)
    invariant = True
    for dx, dy in ((5, 0), (-9, 7), (13, -11), (0, 20)):
        moved = measure_scene(sc.structures.shifted(dx, dy), sc.predicted_landmarks.shifted(dx, dy))
        invariant &= moved.graf_type == base.graf_type and abs(moved.alpha - base.alpha) < 1e-9
    record("6 Graf classification", exact and invariant,
           f"60.0->{classify(60.0)}, 59.999->{classify(59.999)}, translation invariant {invariant}")


def test_07_noise_monotonicity():
    means, success = [], []
    for jitter in (0.0, 1.0, 2.0, 4.0):
        template = PhantomSpec(edge_jitter_px=jitter, dropout_fraction=0.0)
        scenes = generate_batch(300, seed=77, template=template)
        errs = []
        for sc in scenes:
            r = measure_scene(sc.structures, sc.predicted_landmarks)
            errs.append(abs(r.alpha - sc.alpha_true))
        means.append(float(np.mean(errs)))
        success.append(float(np.mean(np.array(errs) < 5.0)))
    monotone = all(a <= b for a, b in zip(means, means[1:]))
    ok = monotone and success[0] >= 0.93 and success[1] >= 0.93
    record("7 noise monotonicity", ok,
           "mean alpha error " + ", ".join(f"{m:.3f}" for m in means)
           + "; success<5deg " + ", ".join(f"{s:.3f}" for s in success))


def _t_oracle(t, df):
    pdf = lambda x: math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)
                             - 0.5 * math.log(df * math.pi) - (df + 1) / 2 * math.log1p(x * x / df))
    return min(1.0, 2 * integrate.quad(pdf, abs(t), np.inf, epsabs=1e-13)[0])


def test_08_statistics():
    rng = np.random.default_rng(8)
    df_ok = two_sample_t(rng.normal(size=10), rng.normal(size=10)).df == 18
    v = rng.normal(size=25)
    r_ok = pearson(v, v) == 1.0
    worst = 0.0
    for _ in range(200):
        na, nb = rng.integers(2, 40, size=2)
        res = two_sample_t(rng.normal(0, 1, na), rng.normal(rng.uniform(-2, 2), 1, nb))
        worst = max(worst, abs(res.p - _t_oracle(res.t, res.df)))
    record("8 statistics", df_ok and r_ok and worst <= 1e-6,
           f"df(10,10)=18: {df_ok}, pearson(v,v)=1: {r_ok}, max p error {worst:.1e}")


def test_09_determinism(tmp_path):
    assert main(["phantom", "--out", str(tmp_path / "data"), "--n", "100", "--seed", "9",
                 "--jitter", "1", "--mask-format", "rle"]) == 0
    manifest = tmp_path / "data" / "manifest.jsonl"
    outputs = {}
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        assert main(["evaluate", "--manifest", str(manifest), "--out", str(out),
                     "--workers", str(w)]) == 0
        outputs[w] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    same = outputs[1] == outputs[4] == outputs[8]
    record("9 determinism", same and len(outputs[1]) >= 5,
           f"{len(outputs[1])} files byte-identical across 1/4/8 workers: {same}")


def test_10_self_evaluation(tmp_path):
    assert main(["phantom", "--out", str(tmp_path / "data"), "--n", "20", "--seed", "10",
                 "--self-eval", "--mask-format", "rle"]) == 0
    out = tmp_path / "eval"
    assert main(["evaluate", "--manifest", str(tmp_path / "data" / "manifest.jsonl"),
                 "--out", str(out), "--angle-truth", "labels"]) == 0
    s = json.loads((out / "summary.json").read_text())
    dsc_ok = all(v["mean"] == 1.0 for v in s["dsc"].values())
    hd_ok = all(v["mean"] == 0.0 for v in s["hd"].values())
    ang_ok = s["alpha"]["error"]["mean"] == 0.0 and s["beta"]["error"]["mean"] == 0.0
    mc_ok = s["misclassification"]["overall"] == 0.0
    # Evaluated landmarks are fused with the mask-derived points, which sit on
    # pixel centres, so they do not reproduce sub-pixel labels exactly.
    lm = max(v["mean"] for v in s["landmark"].values())
    record("10 self-evaluation", dsc_ok and hd_ok and ang_ok and mc_ok,
           f"DSC 1: {dsc_ok}, HD 0: {hd_ok}, angle errors 0: {ang_ok}, "
           f"misclassification 0: {mc_ok} (fused landmark offset {lm:.3f}px, informational)")
