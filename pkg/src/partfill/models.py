"""The completion networks and the end-to-end pipeline.

Three learned pieces:
  * a PointNet-style encoder producing one global feature per partial cloud,
  * a decoder (plain MLP, or a bank of morphing networks mapping unit-square
    samples plus the feature to 3D points) predicting the missing part,
  * a point refiner predicting a bounded displacement field over the merged,
    origin-labeled cloud.

The pipeline is: encode the partial input, decode the missing part, merge the
two clouds and subsample with origin labels, then shift the result by
mu * displacement. During training the loss gradient on the refined cloud
reaches the decoder only through the retained merge selection indices (the
selection itself is treated as constant), and the observed partial points
carry no parameter gradient on the input side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import Matching, emd_approx, emd_exact
from .nn import (
    BatchNormPoints,
    Linear,
    MaxPoolPoints,
    Module,
    ModuleList,
    ReLU,
    Sequential,
    SharedLinear,
    Tanh,
)
from .nn.checkpoint import load_container, load_module_state, module_state, save_container
from .sampling import LabeledCloud, merge_and_sample

FEATURE_DIM = 1024
MISSING_POINTS = 1024
MERGED_POINTS = 2048


class MPNEncoder(Module):
    """Shared per-point MLP, max-pool over points, then one fully connected layer.

    Point order cannot affect the output: every per-point block acts
    independently and the pooling is symmetric. Output width is `feature_dim`
    (1024 by default).
    """

    def __init__(self, rng, in_channels=3, widths=(64, 128, 1024), feature_dim=FEATURE_DIM, dtype=np.float64):
        w1, w2, w3 = widths
        self.l1 = SharedLinear(in_channels, w1, rng, dtype)
        self.bn1 = BatchNormPoints(w1, dtype=dtype)
        self.relu1 = ReLU()
        self.l2 = SharedLinear(w1, w2, rng, dtype)
        self.bn2 = BatchNormPoints(w2, dtype=dtype)
        self.relu2 = ReLU()
        self.l3 = SharedLinear(w2, w3, rng, dtype)
        self.bn3 = BatchNormPoints(w3, dtype=dtype)
        self.pool = MaxPoolPoints()
        self.l4 = Linear(w3, feature_dim, rng, dtype)  # no activation
        self.feature_dim = feature_dim

    def forward(self, clouds: np.ndarray, train: bool = True) -> np.ndarray:
        x = np.ascontiguousarray(clouds.transpose(0, 2, 1))
        h = self.relu1.forward(self.bn1.forward(self.l1.forward(x, train), train), train)
        h = self.relu2.forward(self.bn2.forward(self.l2.forward(h, train), train), train)
        h = self.bn3.forward(self.l3.forward(h, train), train)
        return self.l4.forward(self.pool.forward(h, train), train)

    def backward(self, grad_feature: np.ndarray) -> np.ndarray:
        g = self.pool.backward(self.l4.backward(grad_feature))
        g = self.l3.backward(self.bn3.backward(g))
        g = self.l2.backward(self.bn2.backward(self.relu2.backward(g)))
        g = self.l1.backward(self.bn1.backward(self.relu1.backward(g)))
        return g.transpose(0, 2, 1)


class MLPDecoder(Module):
    """Three fully connected blocks (ReLU after the first two) reshaped to (M, 3)."""

    def __init__(self, rng, feature_dim=FEATURE_DIM, num_points=MISSING_POINTS, hidden=(1024, 1024), dtype=np.float64):
        h1, h2 = hidden
        self.fc1 = Linear(feature_dim, h1, rng, dtype)
        self.relu1 = ReLU()
        self.fc2 = Linear(h1, h2, rng, dtype)
        self.relu2 = ReLU()
        self.fc3 = Linear(h2, num_points * 3, rng, dtype)
        self.num_points = num_points

    def forward(self, feature: np.ndarray, train: bool = True, seed=None) -> np.ndarray:
        h = self.relu1.forward(self.fc1.forward(feature, train), train)
        h = self.relu2.forward(self.fc2.forward(h, train), train)
        out = self.fc3.forward(h, train)
        return out.reshape(len(feature), self.num_points, 3)

    def backward(self, grad_points: np.ndarray) -> np.ndarray:
        g = self.fc3.backward(grad_points.reshape(len(grad_points), -1))
        g = self.fc2.backward(self.relu2.backward(g))
        return self.fc1.backward(self.relu1.backward(g))


def _morph_net(rng, in_channels, hidden, dtype):
    h1, h2, h3 = hidden
    return Sequential(
        SharedLinear(in_channels, h1, rng, dtype), BatchNormPoints(h1, dtype=dtype), ReLU(),
        SharedLinear(h1, h2, rng, dtype), BatchNormPoints(h2, dtype=dtype), ReLU(),
        SharedLinear(h2, h3, rng, dtype), BatchNormPoints(h3, dtype=dtype), ReLU(),
        SharedLinear(h3, 3, rng, dtype), Tanh(),
    )


class MorphingDecoder(Module):
    """A bank of small networks morphing unit-square samples into 3D points.

    Each of the `num_patches` networks receives M / num_patches fresh (u, v)
    samples from [0, 1)^2 per forward, concatenated with the global feature
    (so 2 + feature_dim input channels), and emits 3D coordinates through a
    final tanh, keeping every output inside [-1, 1]^3.
    """

    def __init__(
        self,
        rng,
        feature_dim=FEATURE_DIM,
        num_points=MISSING_POINTS,
        num_patches=16,
        hidden=(512, 256, 128),
        dtype=np.float64,
    ):
        if num_points % num_patches:
            raise ValueError(f"num_points={num_points} not divisible by num_patches={num_patches}")
        self.nets = ModuleList(_morph_net(rng, 2 + feature_dim, hidden, dtype) for _ in range(num_patches))
        self.feature_dim = feature_dim
        self.num_points = num_points
        self.num_patches = num_patches
        self.dtype = dtype

    def forward(self, feature: np.ndarray, train: bool = True, seed=0) -> np.ndarray:
        B, F = feature.shape
        if F != self.feature_dim:
            raise ValueError(f"expected feature dim {self.feature_dim}, got {F}")
        m = self.num_points // self.num_patches
        rng = np.random.default_rng(seed)
        uv = rng.random((self.num_patches, 2, m)).astype(self.dtype)
        self._per_patch = m
        outs = []
        for k, net in enumerate(self.nets):
            inp = np.empty((B, 2 + F, m), dtype=self.dtype)
            inp[:, :2, :] = uv[k][None]
            inp[:, 2:, :] = feature[:, :, None]
            outs.append(net.forward(inp, train))
        return np.concatenate(outs, axis=2).transpose(0, 2, 1)

    def backward(self, grad_points: np.ndarray) -> np.ndarray:
        g = grad_points.transpose(0, 2, 1)
        m = self._per_patch
        grad_feature = None
        for k, net in enumerate(self.nets):
            gin = net.backward(np.ascontiguousarray(g[:, :, k * m : (k + 1) * m]))
            contrib = gin[:, 2:, :].sum(axis=2)
            grad_feature = contrib if grad_feature is None else grad_feature + contrib
        return grad_feature


class PointRefiner(Module):
    """Displacement-field network over an origin-labeled cloud.

    Input is (B, N, 4): xyz plus the {0, 1} origin label channel. A per-point
    trunk (widths 64/128/1024) feeds a max-pool whose output is replicated N
    times and concatenated with the first block's output (1088 channels),
    then reduced through 512/256/128/3 with a final tanh, giving a
    displacement in [-1, 1]^3 per point.
    """

    def __init__(self, rng, in_channels=4, widths=(64, 128, 1024), head=(512, 256, 128), dtype=np.float64):
        w1, w2, w3 = widths
        h1, h2, h3 = head
        self.l1 = SharedLinear(in_channels, w1, rng, dtype)
        self.bn1 = BatchNormPoints(w1, dtype=dtype)
        self.relu1 = ReLU()
        self.l2 = SharedLinear(w1, w2, rng, dtype)
        self.bn2 = BatchNormPoints(w2, dtype=dtype)
        self.relu2 = ReLU()
        self.l3 = SharedLinear(w2, w3, rng, dtype)
        self.bn3 = BatchNormPoints(w3, dtype=dtype)
        self.pool = MaxPoolPoints()
        self.l5 = SharedLinear(w1 + w3, h1, rng, dtype)
        self.bn5 = BatchNormPoints(h1, dtype=dtype)
        self.relu5 = ReLU()
        self.l6 = SharedLinear(h1, h2, rng, dtype)
        self.bn6 = BatchNormPoints(h2, dtype=dtype)
        self.relu6 = ReLU()
        self.l7 = SharedLinear(h2, h3, rng, dtype)
        self.bn7 = BatchNormPoints(h3, dtype=dtype)
        self.relu7 = ReLU()
        self.l8 = SharedLinear(h3, 3, rng, dtype)
        # zero-initialized displacement head: refinement starts at identity
        # and only departs as the loss directs
        self.l8.weight.value[...] = 0
        self.tanh = Tanh()
        self.in_channels = in_channels
        self.trunk_width = w1

    def forward(self, labeled_points: np.ndarray, train: bool = True) -> np.ndarray:
        if labeled_points.ndim != 3 or labeled_points.shape[2] != self.in_channels:
            raise ValueError(f"expected (B, N, {self.in_channels}) input, got {labeled_points.shape}")
        x = np.ascontiguousarray(labeled_points.transpose(0, 2, 1))
        B, _, N = x.shape
        h1 = self.relu1.forward(self.bn1.forward(self.l1.forward(x, train), train), train)
        h2 = self.relu2.forward(self.bn2.forward(self.l2.forward(h1, train), train), train)
        h3 = self.bn3.forward(self.l3.forward(h2, train), train)
        pooled = self.pool.forward(h3, train)
        tiled = np.broadcast_to(pooled[:, :, None], (B, pooled.shape[1], N))
        cat = np.concatenate([h1, tiled], axis=1)
        h = self.relu5.forward(self.bn5.forward(self.l5.forward(cat, train), train), train)
        h = self.relu6.forward(self.bn6.forward(self.l6.forward(h, train), train), train)
        h = self.relu7.forward(self.bn7.forward(self.l7.forward(h, train), train), train)
        out = self.tanh.forward(self.l8.forward(h, train), train)
        return out.transpose(0, 2, 1)

    def backward(self, grad_displacement: np.ndarray) -> np.ndarray:
        g = np.ascontiguousarray(grad_displacement.transpose(0, 2, 1))
        g = self.l8.backward(self.tanh.backward(g))
        g = self.l7.backward(self.bn7.backward(self.relu7.backward(g)))
        g = self.l6.backward(self.bn6.backward(self.relu6.backward(g)))
        g_cat = self.l5.backward(self.bn5.backward(self.relu5.backward(g)))
        w1 = self.trunk_width
        g_h1 = np.ascontiguousarray(g_cat[:, :w1, :])
        g_pooled = g_cat[:, w1:, :].sum(axis=2)
        g_h3 = self.pool.backward(g_pooled)
        g_h2 = self.l3.backward(self.bn3.backward(g_h3))
        g_h1 += self.l2.backward(self.bn2.backward(self.relu2.backward(g_h2)))
        g_x = self.l1.backward(self.bn1.backward(self.relu1.backward(g_h1)))
        return g_x.transpose(0, 2, 1)


@dataclass
class CompletionBatch:
    """Forward-pass context kept for the backward pass and for inspection."""

    missing_pred: np.ndarray  # (B, M, 3)
    merged_points: np.ndarray  # (B, n, 3)
    labels: np.ndarray  # (B, n) in {0, 1}
    selection: np.ndarray  # (B, n) indices into the partial+predicted concatenation
    displacement: np.ndarray  # (B, n, 3), each entry in [-1, 1]
    refined: np.ndarray  # (B, n, 3) = merged_points + mu * displacement
    partial_size: int


class CompletionModel(Module):
    """Encoder + decoder + refiner with merge-and-sample in between."""

    def __init__(
        self,
        encoder: MPNEncoder,
        decoder,
        refiner: PointRefiner,
        mu: float = 1.0,
        sampling_method: str = "ifps",
        mds_sigma: float = 0.05,
        decoder_kind: str = "mbd",
        arch: dict | None = None,
    ):
        if mu <= 0:
            raise ValueError(f"mu must be positive, got {mu}")
        self.encoder = encoder
        self.decoder = decoder
        self.refiner = refiner
        self.mu = float(mu)
        self.sampling_method = sampling_method
        self.mds_sigma = mds_sigma
        self.decoder_kind = decoder_kind
        self.arch = arch or {}

    def forward_batch(
        self,
        partials: np.ndarray,
        train: bool,
        decode_seed,
        merge_seeds,
        merged_size: int = MERGED_POINTS,
        selection: np.ndarray | None = None,
    ) -> CompletionBatch:
        """Run the full pipeline on a (B, N, 3) batch of partial clouds.

        `merge_seeds` holds one seed per batch item. When `selection` is
        given, the merge subsampling is skipped and those indices are used
        directly (gradient checks freeze the selection this way).
        """
        B, n_partial, _ = partials.shape
        feature = self.encoder.forward(partials, train)
        missing = self.decoder.forward(feature, train=train, seed=decode_seed)
        n_missing = missing.shape[1]
        dtype = missing.dtype
        if selection is None:
            sel = np.empty((B, merged_size), dtype=np.int64)
            for b in range(B):
                labeled = merge_and_sample(
                    partials[b], missing[b], merged_size, self.sampling_method, merge_seeds[b], self.mds_sigma
                )
                sel[b] = labeled.source_indices
        else:
            sel = np.asarray(selection, dtype=np.int64)
            merged_size = sel.shape[1]
        concat = np.concatenate([partials.astype(dtype, copy=False), missing], axis=1)
        points = np.take_along_axis(concat, sel[:, :, None], axis=1)
        labels = (sel >= n_partial).astype(np.int64)
        labeled_input = np.concatenate([points, labels[:, :, None].astype(dtype)], axis=2)
        displacement = self.refiner.forward(labeled_input, train)
        refined = points + dtype.type(self.mu) * displacement
        assert refined.shape == (B, merged_size, 3) and labels.shape == (B, merged_size)
        return CompletionBatch(
            missing_pred=missing,
            merged_points=points,
            labels=labels,
            selection=sel,
            displacement=displacement,
            refined=refined,
            partial_size=n_partial,
        )

    def backward_batch(self, ctx: CompletionBatch, grad_missing: np.ndarray, grad_refined: np.ndarray) -> None:
        """Backpropagate loss gradients on (missing_pred, refined) into parameters.

        The merge selection is constant; gradients on refined points reach the
        decoder only through selected predicted points. Gradients landing on
        selected partial points are dropped (the partial input is data).
        """
        dtype = ctx.refined.dtype
        grad_refined = grad_refined.astype(dtype, copy=False)
        grad_labeled = self.refiner.backward(dtype.type(self.mu) * grad_refined)
        grad_points = grad_refined + grad_labeled[:, :, :3]
        grad_missing_total = np.array(grad_missing, dtype=dtype)
        for b in range(len(grad_points)):
            sel = ctx.selection[b]
            predicted = sel >= ctx.partial_size
            grad_missing_total[b][sel[predicted] - ctx.partial_size] += grad_points[b][predicted]
        grad_feature = self.decoder.backward(grad_missing_total)
        self.encoder.backward(grad_feature)

    def complete(self, partial: np.ndarray, seed=0, train: bool = False, merged_size: int = MERGED_POINTS):
        """Complete a single partial cloud.

        Returns (predicted missing part, merged labeled cloud, refined cloud).
        The merged cloud keeps its selection indices so label provenance can
        be audited.
        """
        dtype = self.encoder.l1.weight.value.dtype
        ctx = self.forward_batch(
            np.asarray(partial, dtype=dtype)[None],
            train=train,
            decode_seed=_child_seed(seed, 0),
            merge_seeds=[_child_seed(seed, 1)],
            merged_size=merged_size,
        )
        merged = LabeledCloud(points=ctx.merged_points[0], labels=ctx.labels[0], source_indices=ctx.selection[0])
        return ctx.missing_pred[0], merged, ctx.refined[0]


def _child_seed(seed, tag):
    if isinstance(seed, (list, tuple)):
        return list(seed) + [tag]
    return [int(seed), tag]


@dataclass
class JointLoss:
    """Both loss terms, their sum, and the matchings that realized them."""

    total: float
    missing: float
    refined: float
    missing_match: Matching
    refined_match: Matching


def joint_loss(
    missing_pred: np.ndarray,
    missing_gt: np.ndarray,
    refined: np.ndarray,
    complete_gt: np.ndarray,
    exact: bool = False,
    eps: float | None = None,
    iters: int | None = None,
    eps_start: float = 1.0,
) -> JointLoss:
    """Equal-weight sum of the two earth-mover losses.

    The first term compares the predicted and ground-truth missing parts, the
    second the refined output against the complete shape. Training uses the
    approximate solver; pass exact=True for oracle-grade values on small sets.
    """
    if len(missing_pred) != len(missing_gt):
        raise ValueError(f"missing sizes differ: {len(missing_pred)} vs {len(missing_gt)}")
    if len(refined) != len(complete_gt):
        raise ValueError(f"refined sizes differ: {len(refined)} vs {len(complete_gt)}")
    if exact:
        match_missing = emd_exact(missing_pred, missing_gt)
        match_refined = emd_exact(refined, complete_gt)
    else:
        match_missing = emd_approx(missing_pred, missing_gt, eps=eps, iters=iters, eps_start=eps_start)
        match_refined = emd_approx(refined, complete_gt, eps=eps, iters=iters, eps_start=eps_start)
    return JointLoss(
        total=match_missing.cost + match_refined.cost,
        missing=match_missing.cost,
        refined=match_refined.cost,
        missing_match=match_missing,
        refined_match=match_refined,
    )


_DTYPE_NAMES = {"float64": np.float64, "float32": np.float32}


def build_model(
    seed: int = 0,
    decoder: str = "mbd",
    mu: float = 1.0,
    sampling_method: str = "ifps",
    mds_sigma: float = 0.05,
    precision: str = "float64",
    feature_dim: int = FEATURE_DIM,
    num_missing: int = MISSING_POINTS,
    num_patches: int = 16,
    encoder_widths=(64, 128, 1024),
    mlp_hidden=(1024, 1024),
    morph_hidden=(512, 256, 128),
    refiner_widths=(64, 128, 1024),
    refiner_head=(512, 256, 128),
) -> CompletionModel:
    """Seeded construction of the full model; the arch dict makes checkpoints
    self-describing."""
    if decoder not in ("mlp", "mbd"):
        raise ValueError(f"unknown decoder kind {decoder!r} (expected 'mlp' or 'mbd')")
    if precision not in _DTYPE_NAMES:
        raise ValueError(f"unknown precision {precision!r} (expected 'float64' or 'float32')")
    dtype = _DTYPE_NAMES[precision]
    arch = {
        "seed": int(seed),
        "decoder": decoder,
        "mu": float(mu),
        "sampling_method": sampling_method,
        "mds_sigma": float(mds_sigma),
        "precision": precision,
        "feature_dim": int(feature_dim),
        "num_missing": int(num_missing),
        "num_patches": int(num_patches),
        "encoder_widths": list(encoder_widths),
        "mlp_hidden": list(mlp_hidden),
        "morph_hidden": list(morph_hidden),
        "refiner_widths": list(refiner_widths),
        "refiner_head": list(refiner_head),
    }
    rng = np.random.default_rng(seed)
    enc = MPNEncoder(rng, widths=tuple(encoder_widths), feature_dim=feature_dim, dtype=dtype)
    if decoder == "mlp":
        dec = MLPDecoder(rng, feature_dim, num_missing, tuple(mlp_hidden), dtype)
    else:
        dec = MorphingDecoder(rng, feature_dim, num_missing, num_patches, tuple(morph_hidden), dtype)
    ref = PointRefiner(rng, widths=tuple(refiner_widths), head=tuple(refiner_head), dtype=dtype)
    return CompletionModel(enc, dec, ref, mu, sampling_method, mds_sigma, decoder, arch)


def model_from_arch(arch: dict) -> CompletionModel:
    return build_model(
        seed=arch["seed"],
        decoder=arch["decoder"],
        mu=arch["mu"],
        sampling_method=arch["sampling_method"],
        mds_sigma=arch["mds_sigma"],
        precision=arch["precision"],
        feature_dim=arch["feature_dim"],
        num_missing=arch["num_missing"],
        num_patches=arch["num_patches"],
        encoder_widths=arch["encoder_widths"],
        mlp_hidden=arch["mlp_hidden"],
        morph_hidden=arch["morph_hidden"],
        refiner_widths=arch["refiner_widths"],
        refiner_head=arch["refiner_head"],
    )


def save_model(path, model: CompletionModel, extra_meta: dict | None = None) -> None:
    meta = {"arch": model.arch}
    if extra_meta:
        meta.update(extra_meta)
    save_container(path, module_state(model), meta)


def load_model(path):
    """Rebuild a model from its self-describing checkpoint; returns (model, meta)."""
    entries, meta = load_container(path)
    if "arch" not in meta:
        raise ValueError(f"{path}: checkpoint has no architecture record")
    model = model_from_arch(meta["arch"])
    load_module_state(model, entries)
    return model, meta
