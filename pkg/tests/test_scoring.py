"""Fusion-math, label-generation, and loss tests.

Derived expectations come from independent oracles: an extended-precision
softmax via mpmath, scalar-expansion loops for every matrix/gate op, and a
dictionary-based projection loop for labels.
"""

import math

import mpmath
import numpy as np
import pytest

from sembev import (
    Boxes3D,
    BranchWeights,
    Camera,
    ConvWeights,
    DepthBins,
    LabelMaps,
    LossWeights,
    depth_labels_from_points,
    depth_loss,
    mtd_fuse,
    nearest_upsample2x,
    seg_labels_from_points,
    seg_loss,
    sigmoid_gate,
    softmax_over_depth,
    total_loss,
    upsample_fuse,
)


def mpmath_softmax(logits):
    """Extended-precision per-cell softmax, rounded back to float64."""
    arr = np.asarray(logits)
    out = np.empty_like(arr, dtype=np.float64)
    with mpmath.workdps(60):
        for i in range(arr.shape[1]):
            for j in range(arr.shape[2]):
                exps = [mpmath.e ** mpmath.mpf(float(v)) for v in arr[:, i, j]]
                total = mpmath.fsum(exps)
                for k, e in enumerate(exps):
                    out[k, i, j] = float(e / total)
    return out


def conv1x1_scalar(weight, bias, fmap):
    """Hand-expanded 1x1 convolution with python-float accumulation."""
    out_ch, in_ch = weight.shape
    _, h, w = fmap.shape
    out = np.zeros((out_ch, h, w))
    for o in range(out_ch):
        for i in range(h):
            for j in range(w):
                acc = float(bias[o])
                for c in range(in_ch):
                    acc += float(weight[o, c]) * float(fmap[c, i, j])
                out[o, i, j] = acc
    return out


def logistic_scalar(x):
    return 1.0 / (1.0 + math.exp(-x))


def random_weights(rng, out_ch, in_ch, scale=0.7):
    return ConvWeights(weight=rng.standard_normal((out_ch, in_ch)) * scale,
                       bias=rng.standard_normal(out_ch) * scale)


def random_branch(rng, ch):
    return BranchWeights(gate=random_weights(rng, ch, ch), task=random_weights(rng, ch, ch))


class TestSoftmaxOverDepth:
    def test_uniform_logits(self):
        alpha = softmax_over_depth(np.zeros((4, 2, 2)))
        np.testing.assert_allclose(alpha, 0.25)

    def test_analytic_two_bins(self):
        logits = np.zeros((2, 1, 1))
        logits[1] = math.log(3.0)
        alpha = softmax_over_depth(logits)
        np.testing.assert_allclose(alpha[:, 0, 0], [0.25, 0.75], atol=1e-15)

    def test_matches_extended_precision_reference(self):
        rng = np.random.default_rng(17)
        logits = rng.standard_normal((5, 3, 3)) * 5.0
        np.testing.assert_allclose(softmax_over_depth(logits), mpmath_softmax(logits),
                                   atol=1e-12, rtol=0)

    def test_cells_sum_to_one(self):
        rng = np.random.default_rng(18)
        alpha = softmax_over_depth(rng.standard_normal((7, 4, 6)) * 30.0)
        np.testing.assert_allclose(alpha.sum(axis=0), 1.0, atol=1e-6)
        assert alpha.min() >= 0.0 and alpha.max() <= 1.0

    def test_invariant_to_per_cell_shift(self):
        rng = np.random.default_rng(19)
        logits = rng.standard_normal((6, 3, 2))
        shift = rng.standard_normal((1, 3, 2)) * 50.0
        np.testing.assert_allclose(softmax_over_depth(logits + shift),
                                   softmax_over_depth(logits), atol=1e-9)

    def test_rejects_nan(self):
        logits = np.zeros((2, 1, 1))
        logits[0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            softmax_over_depth(logits)


class TestSigmoidGate:
    def test_zero_weights_give_half(self):
        rng = np.random.default_rng(20)
        fmap = rng.standard_normal((3, 2, 2))
        gate = sigmoid_gate(fmap, ConvWeights.zeros(3, 3))
        np.testing.assert_allclose(gate, 0.5)

    def test_monotone_in_feature(self):
        w = ConvWeights(weight=np.ones((1, 1)), bias=np.zeros(1))
        values = [sigmoid_gate(np.full((1, 1, 1), v), w)[0, 0, 0]
                  for v in (-5.0, 0.0, 5.0, 30.0)]
        assert values == sorted(values)
        np.testing.assert_allclose(values[1], 0.5)
        assert values[-1] < 1.0

    def test_matches_scalar_expansion(self):
        rng = np.random.default_rng(21)
        fmap = rng.standard_normal((4, 2, 2))
        w = random_weights(rng, 4, 4)
        expected = np.vectorize(logistic_scalar)(conv1x1_scalar(w.weight, w.bias, fmap))
        np.testing.assert_allclose(sigmoid_gate(fmap, w), expected, atol=1e-12, rtol=0)

    def test_open_interval_on_moderate_inputs(self):
        rng = np.random.default_rng(22)
        fmap = rng.uniform(-5, 5, size=(4, 3, 3))
        gate = sigmoid_gate(fmap, random_weights(rng, 4, 4))
        assert np.all(gate > 0.0) and np.all(gate < 1.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            sigmoid_gate(np.zeros((3, 2, 2)), ConvWeights.zeros(2, 2))


class TestMtdFuse:
    def test_zero_task_weights_is_identity(self):
        rng = np.random.default_rng(23)
        fd = rng.standard_normal((3, 2, 2))
        fs = rng.standard_normal((3, 2, 2))
        branch = BranchWeights(gate=random_weights(rng, 3, 3), task=ConvWeights.zeros(3, 3))
        out_d, out_s = mtd_fuse(fd, fs, branch, branch)
        np.testing.assert_array_equal(out_d, fd)
        np.testing.assert_array_equal(out_s, fs)

    def test_symmetric_inputs_and_weights(self):
        rng = np.random.default_rng(24)
        f = rng.standard_normal((2, 3, 3))
        branch = random_branch(rng, 2)
        out_d, out_s = mtd_fuse(f, f, branch, branch)
        np.testing.assert_array_equal(out_d, out_s)

    def test_scalar_hand_computation(self):
        """1-channel 1x1 case: gates 0.5, task weight 1 -> (2, 2.5)."""
        fd = np.full((1, 1, 1), 1.0)
        fs = np.full((1, 1, 1), 2.0)
        branch = BranchWeights(gate=ConvWeights.zeros(1, 1),
                               task=ConvWeights(np.ones((1, 1)), np.zeros(1)))
        out_d, out_s = mtd_fuse(fd, fs, branch, branch)
        np.testing.assert_allclose(out_d, 2.0)
        np.testing.assert_allclose(out_s, 2.5)

    def test_matches_scalar_expansion(self):
        rng = np.random.default_rng(25)
        ch = 4
        fd = rng.standard_normal((ch, 4, 4))
        fs = rng.standard_normal((ch, 4, 4))
        db, sb = random_branch(rng, ch), random_branch(rng, ch)
        out_d, out_s = mtd_fuse(fd, fs, db, sb)
        gate_d = np.vectorize(logistic_scalar)(conv1x1_scalar(db.gate.weight, db.gate.bias, fd))
        expect_d = fd + gate_d * conv1x1_scalar(db.task.weight, db.task.bias, fs)
        gate_s = np.vectorize(logistic_scalar)(conv1x1_scalar(sb.gate.weight, sb.gate.bias, fs))
        expect_s = fs + gate_s * conv1x1_scalar(sb.task.weight, sb.task.bias, fd)
        np.testing.assert_allclose(out_d, expect_d, atol=1e-12, rtol=0)
        np.testing.assert_allclose(out_s, expect_s, atol=1e-12, rtol=0)

    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(26)
        branch = random_branch(rng, 2)
        with pytest.raises(ValueError):
            mtd_fuse(np.zeros((2, 2, 2)), np.zeros((2, 3, 2)), branch, branch)


class TestUpsampleFuse:
    def test_upsample_replicates_blocks(self):
        out = nearest_upsample2x(np.full((1, 1, 1), 7.0))
        np.testing.assert_array_equal(out, np.full((1, 2, 2), 7.0))

    def test_blocks_constant_and_equal_to_source(self):
        rng = np.random.default_rng(27)
        f = rng.standard_normal((3, 4, 5))
        up = nearest_upsample2x(f)
        for i in range(4):
            for j in range(5):
                block = up[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2]
                np.testing.assert_array_equal(block, np.broadcast_to(f[:, i, j, None, None],
                                                                     block.shape))

    def test_zero_image_term(self):
        rng = np.random.default_rng(28)
        f16 = rng.standard_normal((2, 3, 3))
        branch = BranchWeights(gate=random_weights(rng, 2, 2),
                               task=ConvWeights(rng.standard_normal((2, 2)), np.zeros(2)))
        out = upsample_fuse(f16, np.zeros((2, 6, 6)), branch)
        np.testing.assert_array_equal(out, nearest_upsample2x(f16))

    def test_scalar_hand_computation(self):
        """Coarse [[1]], image 2x2 of 4, gate 0.5, task identity -> all 3."""
        branch = BranchWeights(gate=ConvWeights.zeros(1, 1),
                               task=ConvWeights(np.ones((1, 1)), np.zeros(1)))
        out = upsample_fuse(np.full((1, 1, 1), 1.0), np.full((1, 2, 2), 4.0), branch)
        np.testing.assert_allclose(out, 3.0)

    def test_matches_scalar_expansion(self):
        rng = np.random.default_rng(29)
        ch = 3
        f16 = rng.standard_normal((ch, 2, 2))
        fi8 = rng.standard_normal((ch, 4, 4))
        branch = random_branch(rng, ch)
        gate = np.vectorize(logistic_scalar)(
            conv1x1_scalar(branch.gate.weight, branch.gate.bias, fi8))
        expected = (nearest_upsample2x(f16)
                    + gate * conv1x1_scalar(branch.task.weight, branch.task.bias, fi8))
        np.testing.assert_allclose(upsample_fuse(f16, fi8, branch), expected,
                                   atol=1e-12, rtol=0)

    def test_rejects_wrong_ratio(self):
        rng = np.random.default_rng(30)
        branch = random_branch(rng, 2)
        with pytest.raises(ValueError, match="2x"):
            upsample_fuse(np.zeros((2, 3, 3)), np.zeros((2, 5, 6)), branch)


def brute_force_labels(points, boxes, cam, feature_shape, stride):
    """Independent per-point projection loop: per cell, minimum depth wins
    (ties by lowest original index)."""
    hf, wf = feature_shape
    best = {}
    for idx in range(len(points)):
        rel = np.asarray(points[idx], dtype=float) - cam.translation
        q = cam.rotation.T @ rel
        if q[2] <= 0:
            continue
        u = cam.fx * q[0] / q[2] + cam.cx
        v = cam.fy * q[1] / q[2] + cam.cy
        col = math.floor(u / stride)
        row = math.floor(v / stride)
        if 0 <= row < hf and 0 <= col < wf:
            if (row, col) not in best or q[2] < best[(row, col)][0]:
                best[(row, col)] = (q[2], idx)
    fg = {}
    if boxes is not None:
        for cell, (_, idx) in best.items():
            fg[cell] = bool(boxes.contains(points[idx][None])[0])
    return best, fg


def forward_camera():
    """A camera at the origin looking along +x, image plane 64x64, stride 16."""
    rot = np.array([[0.0, 0.0, 1.0],
                    [-1.0, 0.0, 0.0],
                    [0.0, -1.0, 0.0]])
    return Camera(fx=32.0, fy=32.0, cx=32.0, cy=32.0, rotation=rot,
                  translation=np.zeros(3), image_size=(64, 64), stride=16)


class TestLabelGeneration:
    def test_single_point_single_cell(self):
        cam = forward_camera()
        labels = depth_labels_from_points(np.array([[5.0, 0.0, 0.0]]), cam, (4, 4), 16)
        assert labels.valid.sum() == 1
        i, j = np.argwhere(labels.valid)[0]
        assert labels.depth[i, j] == pytest.approx(5.0)

    def test_minimum_depth_wins(self):
        cam = forward_camera()
        pts = np.array([[5.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        labels = depth_labels_from_points(pts, cam, (4, 4), 16)
        assert labels.depth[labels.valid][0] == pytest.approx(3.0)

    def test_point_behind_camera_ignored(self):
        cam = forward_camera()
        labels = depth_labels_from_points(np.array([[-2.0, 0.0, 0.0]]), cam, (4, 4), 16)
        assert not labels.valid.any()

    def test_foreground_follows_min_depth_point(self):
        cam = forward_camera()
        box = Boxes3D(centers=[[5.0, 0.0, 0.0]], sizes=[[2, 2, 2]], yaws=[0.0], classes=[0])
        labels = seg_labels_from_points(np.array([[5.0, 0.0, 0.0]]), box, cam, (4, 4), 16)
        assert labels.foreground.sum() == 1

    def test_point_outside_all_boxes_is_background(self):
        cam = forward_camera()
        box = Boxes3D(centers=[[50.0, 0.0, 0.0]], sizes=[[1, 1, 1]], yaws=[0.0], classes=[0])
        labels = seg_labels_from_points(np.array([[5.0, 0.0, 0.0]]), box, cam, (4, 4), 16)
        assert labels.valid.sum() == 1 and not labels.foreground.any()

    def test_no_points_gives_no_labels(self):
        cam = forward_camera()
        labels = seg_labels_from_points(np.zeros((0, 3)), Boxes3D.empty(), cam, (4, 4), 16)
        assert not labels.valid.any() and not labels.foreground.any()

    def test_matches_brute_force_on_random_scenes(self):
        rng = np.random.default_rng(31)
        cam = forward_camera()
        for _ in range(10):
            pts = np.column_stack([rng.uniform(0.5, 20.0, 120),
                                   rng.uniform(-8.0, 8.0, 120),
                                   rng.uniform(-3.0, 3.0, 120)])
            boxes = Boxes3D(centers=rng.uniform(-10, 10, (3, 3)),
                            sizes=rng.uniform(1.0, 6.0, (3, 3)),
                            yaws=rng.uniform(-np.pi, np.pi, 3),
                            classes=np.zeros(3, dtype=np.int64))
            labels = seg_labels_from_points(pts, boxes, cam, (4, 4), 16)
            expect, fg = brute_force_labels(pts, boxes, cam, (4, 4), 16)
            assert set(map(tuple, np.argwhere(labels.valid))) == set(expect)
            for (i, j), (depth, _) in expect.items():
                assert labels.depth[i, j] == depth
                assert labels.foreground[i, j] == fg[(i, j)]


class TestLosses:
    def make_labels(self, depth, fg=None):
        depth = np.asarray(depth, dtype=float)
        valid = depth > 0
        fg = np.zeros_like(valid) if fg is None else np.asarray(fg, dtype=bool)
        return LabelMaps(depth=depth, foreground=fg & valid, valid=valid)

    def test_depth_loss_perfect_prediction(self):
        bins = DepthBins(1.0, 1.0, 4)
        labels = self.make_labels([[2.5, 0.0], [0.0, 0.0]])
        pred = np.zeros((4, 2, 2))
        pred[1, 0, 0] = 1.0  # depth 2.5 falls in bin 1
        pred[0] = np.where(pred.sum(axis=0) == 0, 1.0, pred[0])
        assert depth_loss(pred, labels, bins) == 0.0

    def test_depth_loss_uniform(self):
        bins = DepthBins(1.0, 1.0, 4)
        labels = self.make_labels([[2.5, 0.0], [0.0, 0.0]])
        pred = np.full((4, 2, 2), 0.25)
        assert depth_loss(pred, labels, bins) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_depth_loss_empty(self):
        bins = DepthBins(1.0, 1.0, 4)
        labels = self.make_labels(np.zeros((2, 2)))
        assert depth_loss(np.full((4, 2, 2), 0.25), labels, bins) == 0.0

    def test_depth_loss_excludes_out_of_range_labels(self):
        bins = DepthBins(1.0, 1.0, 4)
        labels = self.make_labels([[99.0, 2.5], [0.0, 0.0]])
        pred = np.full((4, 2, 2), 0.25)
        assert depth_loss(pred, labels, bins) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_seg_loss_perfect(self):
        labels = self.make_labels([[1.0, 1.0]], fg=[[True, False]])
        pred = np.array([[1.0, 0.0]])
        assert seg_loss(pred, labels) <= 1e-6

    def test_seg_loss_half(self):
        labels = self.make_labels([[1.0, 1.0]], fg=[[True, False]])
        assert seg_loss(np.full((1, 2), 0.5), labels) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_seg_loss_empty(self):
        labels = self.make_labels(np.zeros((1, 2)))
        assert seg_loss(np.full((1, 2), 0.5), labels) == 0.0

    def test_total_loss_cases(self):
        w = LossWeights(lambda_semantic=1.0, lambda_depth=1.0)
        assert total_loss(0, 0, 0, 0, 0, w) == 0.0
        assert total_loss(3.5, 1, 2, 3, 4, LossWeights(0.0, 0.0)) == 3.5
        assert total_loss(0.0, 1.0, 3.0, 9.0, 9.0, LossWeights(2.0, 0.0)) == 4.0

    def test_total_loss_linear_in_each_term(self):
        rng = np.random.default_rng(33)
        w = LossWeights(lambda_semantic=rng.uniform(0, 2), lambda_depth=rng.uniform(0, 2))
        base = [float(v) for v in rng.uniform(0, 3, 5)]
        f0 = total_loss(*base, w)
        for k in range(5):
            bumped = list(base)
            bumped[k] += 1.0
            delta = total_loss(*bumped, w) - f0
            bumped[k] += 1.0
            delta2 = total_loss(*bumped, w) - f0
            assert delta2 == pytest.approx(2 * delta, rel=1e-12)

    def test_total_loss_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            total_loss(np.inf, 0, 0, 0, 0, LossWeights())

    def test_loss_weights_validate(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_semantic=-0.1)
