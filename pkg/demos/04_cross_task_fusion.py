"""The gated cross-task head math and its supervision signals.

The depth and semantic branches each keep their own feature but receive
the other branch's feature through a 1x1 transform, scaled elementwise by
a sigmoid gate of the receiver. The fused coarse features are then
upsampled and merged with the finer image feature using the same gating
form. Supervision comes from a projected point cloud: per-cell minimum
depth, and a foreground flag when the winning point sits inside a box.
"""

import numpy as np

import sembev as sb

rng = np.random.default_rng(5)

# --- gated fusion at the coarse scale -----------------------------------
ch, h, w = 4, 4, 8
f_depth = rng.standard_normal((ch, h, w))
f_sem = rng.standard_normal((ch, h, w))


def branch():
    return sb.BranchWeights(
        gate=sb.ConvWeights(rng.standard_normal((ch, ch)) * 0.5, rng.standard_normal(ch) * 0.1),
        task=sb.ConvWeights(rng.standard_normal((ch, ch)) * 0.5, np.zeros(ch)))


fused_depth, fused_sem = sb.mtd_fuse(f_depth, f_sem, branch(), branch())
print("coarse fusion changes the features but keeps their shape:")
print("  |fused - original| depth branch:", np.abs(fused_depth - f_depth).mean().round(4))
print("  |fused - original| sem branch:  ", np.abs(fused_sem - f_sem).mean().round(4))

gate = sb.sigmoid_gate(f_depth, branch().gate)
print(f"  gate range: ({gate.min():.3f}, {gate.max():.3f}) -- always inside (0, 1)")

# --- merge with the finer scale ------------------------------------------
f_image8 = rng.standard_normal((ch, 2 * h, 2 * w))
fine_depth = sb.upsample_fuse(fused_depth, f_image8, branch())
print("upsample+merge output shape:", fine_depth.shape)

# --- supervision from a synthetic point cloud -----------------------------
scene = sb.gen_scene(9, n_objects=5, extent=40.0)
cam = sb.ring_rig(1, image_size=(256, 128), stride=16, fx=120.0, fy=120.0)[0]
points, inside, _ = sb.sample_point_cloud(scene, 3, 4000, bg_ratio=0.6)
labels = sb.seg_labels_from_points(points, scene.boxes, cam, cam.feature_shape, 16)
print(f"\nprojected cloud: {int(labels.valid.sum())} labeled cells, "
      f"{int(labels.foreground.sum())} foreground")

# the loss machinery is calibrated: a prediction that one-hots every
# labeled cell's own bin scores exactly zero, total ignorance scores ln N
bins = sb.DepthBins(1.0, 1.0, 59)
hf, wf = cam.feature_shape
perfect = np.full((bins.n_bins, hf, wf), 0.0)
perfect[0] = 1.0
cells = np.flatnonzero(labels.valid.ravel())
perfect.reshape(bins.n_bins, -1)[:, cells] = 0.0
perfect.reshape(bins.n_bins, -1)[bins.bin_of(labels.depth.ravel()[cells]), cells] = 1.0
uniform = np.full((bins.n_bins, hf, wf), 1.0 / bins.n_bins)
print(f"depth loss, perfect prediction: {sb.depth_loss(perfect, labels, bins):.4f}")
print(f"depth loss, uniform guess:      {sb.depth_loss(uniform, labels, bins):.4f} "
      f"(= ln {bins.n_bins})")

# the renderer's one-hot maps sit in between: its depths come from cell
# CENTER rays while labels come from per-cell minimum point depths, so a
# hard one-hot misses the labeled bin wherever the two disagree (box
# edges, grazing ground) and pays the clamped cross-entropy for it
view = sb.render_views(scene, sb.CameraRig((cam,)), cam.feature_shape, 16, bins,
                       channels=4)[0]
l_sem = sb.seg_loss(view.semantic, labels)
l_depth = sb.depth_loss(view.depth_dist, labels, bins)
total = sb.total_loss(0.0, l_sem, l_sem, l_depth, l_depth,
                      sb.LossWeights(lambda_semantic=1.0, lambda_depth=1.0))
print(f"rendered oracle maps: seg loss {l_sem:.4f}, depth loss {l_depth:.4f}, "
      f"composed total {total:.4f}")
