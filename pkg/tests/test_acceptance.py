"""Release acceptance gate: one test per shipping criterion.

Every test wraps its checks in the ``criterion`` context manager, which
prints ``ACCEPTANCE n (<what it covers>): PASS`` or ``FAIL`` so a plain
``pytest -s tests/test_acceptance.py`` (or ``-rA``) reads as a checklist.
Each criterion is a single test, so the printed verdict and the pytest
outcome always agree. Tolerances are part of the contract and are asserted
exactly as stated; several checks are bitwise on purpose.
"""

import math
import time
from contextlib import contextmanager
from dataclasses import asdict

import numpy as np
import pytest
from scipy.spatial import cKDTree

from panometrics import losses
from panometrics.depthio import DepthPanorama, filter_split, load_manifest
from panometrics.icosphere import build_icosphere
from panometrics.metrics.boundary import canny_edges, distance_transform
from panometrics.metrics.direct import delta_accuracy, direct_errors
from panometrics.metrics.geom import (
    OrientedPointCloud,
    TriangleMesh,
    angle_between_deg,
    c2c,
    lift,
    m2m_hausdorff,
    normals_from_depth,
)
from panometrics.report import (
    EvalOptions,
    MetricsReport,
    evaluate,
    evaluate_pair,
    indicators,
    rank_models,
)
from panometrics.sphere import direction_grid, wrap_longitude
from panometrics.warp import apply_displacement, column_shift_field, identity_field

from helpers import (
    floor_plane,
    noisy_prediction,
    pano,
    random_pair,
    random_panorama,
    sphere_scene,
    write_pfm_manifest,
)
from oracles import brute_wrapped_edt, canny_reference


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number} ({description}): FAIL")
        raise
    print(f"\nACCEPTANCE {number} ({description}): PASS")


# ---------------------------------------------------------------------------


def test_acceptance_1_metric_identity_suite():
    with criterion(1, "pred == gt scores perfectly on every metric"):
        options = EvalOptions(geom=True, m2m_samples=2000, ico_order=2)
        for seed in range(20):
            w, h = (128, 64) if seed % 5 == 0 else (64, 32)
            gt = pano(random_panorama(seed, w, h, boxes=3))
            rep = evaluate_pair(gt, gt, options)
            d = rep.direct
            assert d["rmse"] == 0.0 and d["rmsle"] == 0.0
            assert d["abs_rel"] == 0.0 and d["sq_rel"] == 0.0
            assert all(v == 1.0 for v in d["delta"].values())
            assert all(v == 1.0 for v in d["delta_ico"].values())
            b = rep.boundary
            assert b["dbe_acc"] == 0.0 and b["dbe_comp"] == 0.0
            for cell in b["edges"].values():
                assert cell["precision"] == 1.0 and cell["recall"] == 1.0
                assert cell["f1"] == 1.0 and not cell["degenerate"]
            assert rep.smoothness["rmse_deg"] < 1e-6
            assert all(v == 1.0 for v in rep.smoothness["alpha"].values())
            g = rep.geometry
            assert (g["c2c_mean"], g["c2c_std"]) == (0.0, 0.0)
            assert g["m2m"] == 0.0 and g["m2m_worst"] == 0.0


def test_acceptance_2_gradient_suite():
    with criterion(2, "analytic loss gradients match finite differences"):
        t0 = time.monotonic()
        for seed in range(20):
            gt_p = pano(random_panorama(seed, 16, 8))
            pred_p = pano(noisy_prediction(1000 + seed, gt_p.values), clamp=True)
            pred, gt = pred_p.values, gt_p.values
            mask = pred_p.mask & gt_p.mask
            cfg = losses.VnlConfig(n_triplets=150, seed=seed)
            cases = [
                # (name, loss, fd step, relative tolerance, exclude cap pixels)
                ("l1", losses.depth_l1, 1e-5, 1e-5, False),
                ("log-l1", losses.depth_log_l1, 1e-5, 1e-5, False),
                ("berhu", losses.berhu, 1e-5, 1e-4, True),
                ("grad", losses.multiscale_gradient, 1e-5, 1e-4, False),
                ("cosine", losses.normal_cosine, 1e-5, 1e-4, False),
                ("vnl", lambda p, g, m: losses.virtual_normal(p, g, m, cfg),
                 1e-7, 1e-4, False),
                ("combined", losses.combined, 1e-5, 1e-4, False),
                ("combined-vnl",
                 lambda p, g, m: losses.combined_with_virtual_normal(p, g, m, cfg),
                 1e-7, 1e-4, False),
            ]
            for name, fn, step, tol, exclude_cap in cases:
                analytic = fn(pred, gt, mask).gradient
                fd = losses.finite_difference_gradient(fn, pred, gt, mask, step=step)
                keep = mask.copy()
                if exclude_cap:
                    # The cutoff between the linear and quadratic regimes
                    # follows the largest error; nudging that pixel moves the
                    # cutoff itself, which the analytic form holds constant.
                    err = np.where(mask, np.abs(pred - gt), 0.0)
                    keep &= err < err.max()
                scale = max(float(np.abs(analytic).max()), 1.0)
                worst = float(np.abs(fd - analytic)[keep].max()) / scale
                assert worst < tol, (name, seed, worst)
        assert time.monotonic() - t0 < 30.0


def test_acceptance_3_invariance_suite():
    with criterion(3, "offset, scale, and homogeneity invariances"):
        for seed in range(5):
            gt_p = pano(random_panorama(seed, 16, 8))
            value = losses.multiscale_gradient(
                gt_p.values + 0.37, gt_p.values, gt_p.mask
            ).value
            assert abs(value) < 1e-10
        for s in (0.5, 2.0, 10.0):
            for seed in (0, 1):
                gt_p = pano(random_panorama(seed, 16, 8))
                cos = losses.normal_cosine(s * gt_p.values, gt_p.values, gt_p.mask)
                assert cos.value < 1e-8
                cfg = losses.VnlConfig(n_triplets=200, seed=seed)
                vnl = losses.virtual_normal(s * gt_p.values, gt_p.values, gt_p.mask, cfg)
                assert vnl.value < 1e-8
        for seed in range(5):
            p, g = random_pair(seed, 32, 16)
            base = direct_errors(p, g)
            base_delta = delta_accuracy(p, g, 1.25)
            for s in (2.0, 0.5, 3.0):
                ps = DepthPanorama(s * p.values, p.mask.copy(), s * p.d_max)
                gs = DepthPanorama(s * g.values, g.mask.copy(), s * g.d_max)
                scaled = direct_errors(ps, gs)
                assert scaled.abs_rel == pytest.approx(base.abs_rel, rel=1e-12)
                assert delta_accuracy(ps, gs, 1.25) == base_delta
                if s in (2.0, 0.5):  # power-of-two scaling commutes with rounding
                    assert scaled.rmse == s * base.rmse
                else:
                    assert scaled.rmse == pytest.approx(s * base.rmse, rel=1e-12)


def test_acceptance_4_oracle_suites():
    with criterion(4, "distance transform, nearest neighbor, and edge oracles"):
        rng = np.random.default_rng(0)
        for _ in range(100):
            edges = rng.random((8, 16)) < 0.1
            np.testing.assert_array_equal(
                distance_transform(edges), brute_wrapped_edt(edges)
            )
        for _ in range(100):
            ref = rng.uniform(-1.0, 1.0, size=(1000, 3))
            queries = rng.uniform(-1.0, 1.0, size=(1000, 3))
            dist, idx = cKDTree(ref).query(queries)
            diff = queries[:, None, :] - ref[None, :, :]
            d2 = np.einsum("qrk,qrk->qr", diff, diff)
            brute_idx = d2.argmin(axis=1)
            np.testing.assert_array_equal(idx, brute_idx)
            brute_dist = np.sqrt(d2[np.arange(len(queries)), brute_idx])
            np.testing.assert_allclose(dist, brute_dist, rtol=1e-12, atol=0.0)
        step = np.full((16, 32), 2.0)
        step[:, 16:] = 8.0  # steps at the midline and across the seam
        for values in (step, np.roll(step, 9, axis=1)):
            d = pano(values)
            ref = canny_reference(d.values, d.mask, d.d_max)
            np.testing.assert_array_equal(canny_edges(d).edges, ref)


def test_acceptance_5_geometry_fixtures():
    with criterion(5, "mesh gap, plane shift, and analytic normal fixtures"):
        quad = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]
        )
        tris = [[0, 1, 2], [0, 2, 3]]
        near = TriangleMesh(vertices=quad, triangles=tris)
        far = TriangleMesh(vertices=quad + [0.0, 0.0, 0.25], triangles=tris)
        r = m2m_hausdorff(near, far, n_samples=4000)
        assert r.max_distance == pytest.approx(0.25, abs=1e-6)
        assert r.mean_distance == pytest.approx(0.25, abs=1e-6)

        gt = lift(floor_plane(64, 32))

        def shifted_by(offset):
            return OrientedPointCloud(
                points=gt.points + np.asarray(offset),
                normals=np.zeros_like(gt.normals),
                normal_valid=np.zeros(len(gt), dtype=bool),
                pixel_index=gt.pixel_index,
            )

        mean, std = c2c(shifted_by([0.0, 0.1, 0.0]), gt)  # along the normals
        assert mean == pytest.approx(0.1, abs=1e-3) and std < 1e-3
        mean, _ = c2c(shifted_by([0.1, 0.0, 0.0]), gt)  # tangential slide
        assert mean < 1e-3

        d = sphere_scene(64, 32)
        normals, valid = normals_from_depth(d)
        dirs = direction_grid(64, 32)
        assert angle_between_deg(normals[valid], -dirs[valid]).max() <= 0.5
        d = floor_plane(64, 32)
        normals, valid = normals_from_depth(d)
        up = np.array([0.0, 1.0, 0.0])
        assert angle_between_deg(normals[valid], up).max() <= 1.0


def test_acceptance_6_icosphere_counts():
    with criterion(6, "icosphere vertex counts and unit radii"):
        for order, expected in ((0, 12), (1, 42), (2, 162), (6, 40962)):
            sphere = build_icosphere(order)
            assert len(sphere.vertices) == expected
            radii = np.linalg.norm(sphere.vertices, axis=-1)
            assert np.abs(radii - 1.0).max() <= 1e-9


def test_acceptance_7_wrap_operator():
    with criterion(7, "longitude periodicity and exact pixel-center warps"):
        rng = np.random.default_rng(1)
        phi = rng.uniform(-50.0, 50.0, size=10_000)
        turns = rng.integers(-3, 4, size=phi.shape)
        base = wrap_longitude(phi)
        assert np.abs(wrap_longitude(phi + 2.0 * np.pi) - base).max() < 1e-9
        assert np.abs(wrap_longitude(phi + 2.0 * np.pi * turns) - base).max() < 1e-9

        d = pano(random_panorama(3, 32, 16))
        out = apply_displacement(d, identity_field(32, 16))
        np.testing.assert_array_equal(out.values, d.values)
        np.testing.assert_array_equal(out.mask, d.mask)
        out = apply_displacement(d, column_shift_field(32, 16, columns=1))
        np.testing.assert_array_equal(out.values, np.roll(d.values, -1, axis=1))


def test_acceptance_8_golden_report_behaviour(tmp_path):
    with criterion(8, "frozen rankings, indicator value, and the 10% filter"):
        def stub(direct):
            return MetricsReport(sample_count=1, direct=direct, boundary={}, smoothness={})

        wrmse = {
            "Pnas": 0.5367,
            "UNet": 0.4520,
            "DenseNet": 0.5209,
            "ResNet": 0.5294,
            "ResNet_skip": 0.4788,
        }
        table = rank_models(
            {m: stub({"w_rmse": v}) for m, v in wrmse.items()}, ["w_rmse"]
        )
        rank_of = {m: row[0] for m, row in zip(table.models, table.ranks)}
        assert rank_of["UNet"] == 1
        assert rank_of["ResNet_skip"] == 2
        assert rank_of["DenseNet"] == 3

        vertex_delta = {
            "Pnas": 36.44,
            "UNet": 36.68,
            "DenseNet": 35.97,
            "ResNet": 32.03,
            "ResNet_skip": 36.20,
        }
        table = rank_models(
            {m: stub({"delta_ico": {"1.05": v}}) for m, v in vertex_delta.items()},
            ["delta_ico_1.05"],
        )
        rank_of = {m: row[0] for m, row in zip(table.models, table.ranks)}
        assert rank_of["UNet"] == 1
        assert rank_of["Pnas"] == 2
        assert rank_of["ResNet_skip"] == 3

        report = MetricsReport(
            sample_count=1,
            direct={"rmse": 0.3967, "delta": {"1.25": 0.8908}},
            boundary={"dbe_acc": 1.0, "edges": {"1.0": {"f1": 0.5}}},
            smoothness={"rmse_deg": 10.0, "alpha": {"11.25": 0.5}},
        )
        assert indicators(report).depth == pytest.approx(23.08, abs=0.05)

        boundary_case = np.full((50, 100), 5.0)  # 5000 pixels
        boundary_case.reshape(-1)[:500] = 0.0  # exactly 10.0% natively invalid
        over_case = np.full((50, 100), 5.0)
        over_case.reshape(-1)[:505] = 0.0  # 10.1%
        manifest = load_manifest(
            write_pfm_manifest(
                tmp_path, [boundary_case, over_case], "acc8", ids=["at_cap", "over_cap"]
            )
        )
        result = filter_split(manifest, max_invalid=0.10)
        assert result.fractions == pytest.approx([0.1, 0.101], rel=1e-12)
        assert [r.id for r in result.kept.records] == ["at_cap"]
        assert [r.id for r in result.dropped] == ["over_cap"]


def test_acceptance_9_performance(tmp_path):
    with criterion(9, "runtime budgets and parallel determinism"):
        gt = pano(random_panorama(0, 512, 256, boxes=3))
        pred = pano(noisy_prediction(1, gt.values), clamp=True)
        options = EvalOptions()
        evaluate_pair(pred, gt, options)  # warm the cached grids and icosphere
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            evaluate_pair(pred, gt, options)
            times.append(time.perf_counter() - t0)
        assert sorted(times)[2] < 0.100, f"median {sorted(times)[2]:.3f}s"

        t0 = time.perf_counter()
        evaluate_pair(pred, gt, EvalOptions(geom=True, m2m_samples=10_000))
        assert time.perf_counter() - t0 < 5.0

        n = 100
        gt_m = load_manifest(
            write_pfm_manifest(
                tmp_path, (random_panorama(s, 512, 256) for s in range(n)), "gt"
            )
        )
        pred_m = load_manifest(
            write_pfm_manifest(
                tmp_path,
                (
                    noisy_prediction(1000 + s, random_panorama(s, 512, 256))
                    for s in range(n)
                ),
                "pred",
            )
        )
        t0 = time.perf_counter()
        parallel = evaluate(pred_m, gt_m, EvalOptions(jobs=4))
        assert time.perf_counter() - t0 < 30.0
        sequential = evaluate(pred_m, gt_m, EvalOptions(jobs=1))
        p, s = asdict(parallel), asdict(sequential)
        p.pop("options"), s.pop("options")  # they differ in the jobs knob only
        assert p == s
