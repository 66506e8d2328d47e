"""The gradient-check suite: every layer, both composed networks, and the
end-to-end pipeline with frozen matching and merge selection.

Fixture seeds are chosen so inputs stay away from ReLU kinks and max-pool
ties; with seeds fixed, the whole suite is deterministic.
"""

from __future__ import annotations

import numpy as np

from .metrics import Matching, emd_exact, emd_gradient, matched_cost
from .models import MLPDecoder, MorphingDecoder, MPNEncoder, PointRefiner, build_model
from .nn import (
    BatchNormPoints,
    GradCheckReport,
    Linear,
    MaxPoolPoints,
    Module,
    ReLU,
    Sequential,
    SharedLinear,
    Tanh,
    check_module,
    max_relative_error,
    zero_grads,
)


def _kink_free(rng, shape, margin=0.05):
    # magnitudes bounded away from zero so +-h never crosses the ReLU kink
    return (rng.random(shape) + margin) * np.where(rng.random(shape) < 0.5, -1.0, 1.0)


def _gapped(rng, shape, gap=0.1):
    # distinct values with a fixed minimum gap, shuffled: safe for argmax routing
    flat = gap * np.arange(np.prod(shape), dtype=np.float64)
    return rng.permutation(flat).reshape(shape)


class _MissingPartNetwork(Module):
    """Encoder plus decoder, composing to the missing-part prediction map."""

    def __init__(self, encoder, decoder, decode_seed=7):
        self.encoder = encoder
        self.decoder = decoder
        self._seed = decode_seed

    def forward(self, x, train=True):
        return self.decoder.forward(self.encoder.forward(x, train), train=train, seed=self._seed)

    def backward(self, grad_out):
        return self.encoder.backward(self.decoder.backward(grad_out))


def check_layers(seed: int = 3) -> list[GradCheckReport]:
    rng = np.random.default_rng(seed)
    reports = []

    shared = SharedLinear(3, 4, rng)
    reports.append(check_module("shared_linear", shared, rng.standard_normal((2, 3, 5)), tol=1e-6))

    fc = Linear(4, 2, rng)
    reports.append(check_module("fully_connected", fc, rng.standard_normal((3, 4)), tol=1e-6))

    reports.append(check_module("relu", ReLU(), _kink_free(rng, (2, 3, 4)), tol=1e-6))
    reports.append(check_module("tanh", Tanh(), rng.standard_normal((2, 3, 4)), tol=1e-6))
    reports.append(check_module("max_pool", MaxPoolPoints(), _gapped(rng, (2, 3, 5)), tol=1e-6))

    bn_train = BatchNormPoints(4)
    reports.append(check_module("batch_norm_train", bn_train, rng.standard_normal((2, 4, 6)), tol=1e-5))

    bn_eval = BatchNormPoints(4)
    bn_eval.set_local_buffer("running_mean", rng.standard_normal(4))
    bn_eval.set_local_buffer("running_var", rng.random(4) + 0.5)
    reports.append(
        check_module("batch_norm_eval", bn_eval, rng.standard_normal((2, 4, 6)), train=False, tol=1e-6)
    )

    block = Sequential(SharedLinear(3, 4, rng), BatchNormPoints(4), ReLU())
    reports.append(check_module("shared_linear+bn+relu", block, rng.standard_normal((2, 3, 5)), tol=1e-5))
    return reports


def check_networks(seed: int = 11) -> list[GradCheckReport]:
    reports = []

    rng = np.random.default_rng(seed)
    enc = MPNEncoder(rng, widths=(4, 5, 6), feature_dim=6)
    dec = MLPDecoder(rng, feature_dim=6, num_points=4, hidden=(8, 8))
    reports.append(
        check_module("mpn_mlp", _MissingPartNetwork(enc, dec), rng.standard_normal((2, 6, 3)), tol=1e-4)
    )

    rng = np.random.default_rng(seed + 1)
    enc = MPNEncoder(rng, widths=(4, 5, 6), feature_dim=6)
    dec = MorphingDecoder(rng, feature_dim=6, num_points=4, num_patches=2, hidden=(5, 4, 3))
    reports.append(
        check_module("mpn_mbd", _MissingPartNetwork(enc, dec), rng.standard_normal((2, 6, 3)), tol=1e-4)
    )

    rng = np.random.default_rng(seed + 2)
    prn = PointRefiner(rng, widths=(4, 5, 6), head=(7, 6, 5))
    _randomize_displacement_head(prn, rng)
    labeled = np.concatenate(
        [rng.standard_normal((2, 6, 3)), (rng.random((2, 6, 1)) < 0.5).astype(np.float64)], axis=2
    )
    reports.append(check_module("prn", prn, np.ascontiguousarray(labeled), tol=1e-4))
    return reports


def _randomize_displacement_head(refiner, rng):
    # the default head init is zero (refinement starts at identity); that
    # would zero every trunk gradient and make the check vacuous
    w = refiner.l8.weight.value
    w[...] = rng.uniform(-0.5, 0.5, size=w.shape)


def check_pipeline(seed: int = 29, tol: float = 1e-4) -> GradCheckReport:
    """End-to-end check at toy sizes with the earth-mover matchings and the
    merge selection both frozen, which is exactly how training routes
    gradients through them."""
    model = build_model(
        seed=seed,
        decoder="mbd",
        feature_dim=6,
        num_missing=8,
        num_patches=2,
        encoder_widths=(4, 5, 6),
        morph_hidden=(5, 4, 3),
        refiner_widths=(4, 5, 6),
        refiner_head=(7, 6, 5),
    )
    rng = np.random.default_rng(seed + 1)
    _randomize_displacement_head(model.refiner, rng)
    partial = rng.standard_normal((1, 16, 3))
    missing_gt = rng.standard_normal((8, 3))
    complete_gt = rng.standard_normal((12, 3))
    decode_seed = [seed, 0]

    ctx = model.forward_batch(partial, train=True, decode_seed=decode_seed, merge_seeds=[[seed, 1]], merged_size=12)
    selection = ctx.selection.copy()
    match_missing = emd_exact(ctx.missing_pred[0], missing_gt)
    match_refined = emd_exact(ctx.refined[0], complete_gt)

    def loss() -> float:
        out = model.forward_batch(partial, train=True, decode_seed=decode_seed, merge_seeds=None, selection=selection)
        return matched_cost(out.missing_pred[0], missing_gt, match_missing.assignment) + matched_cost(
            out.refined[0], complete_gt, match_refined.assignment
        )

    params = model.params()
    zero_grads(params)
    ctx = model.forward_batch(partial, train=True, decode_seed=decode_seed, merge_seeds=None, selection=selection)
    grad_missing = emd_gradient(ctx.missing_pred[0], missing_gt, match_missing)[None]
    grad_refined = emd_gradient(ctx.refined[0], complete_gt, match_refined)[None]
    model.backward_batch(ctx, grad_missing, grad_refined)

    arrays = [p.value for p in params]
    grads = [p.grad for p in params]
    return GradCheckReport("pipeline_frozen_matching", max_relative_error(loss, arrays, grads), tol)


def run_all() -> list[GradCheckReport]:
    return check_layers() + check_networks() + [check_pipeline()]
