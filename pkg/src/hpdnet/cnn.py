"""Patchwise convolutional classifier over per-pixel feature fields.

The network is a stack of "same"-padded convolutions with ReLU, 2x2 max
pooling after selected layers, one fully connected ReLU layer, and a
bias-free softmax layer (``p_c ∝ exp(h^T w_c)``). Forward and backward
passes are written out in numpy; arrays are channel-last
``(batch, rows, cols, channels)``.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._parallel import map_chunks
from .errors import ConfigError, DivergedLoss, NoLabels, ShapeError
from .polsar import stratified_sample

PROB_FLOOR = 1e-12
INFER_CHUNK = 64


@dataclass(frozen=True)
class CnnConfig:
    patch_size: int = 13
    conv_kernels: tuple = (5, 3, 3, 3, 1)
    conv_channels: tuple = (16, 32, 32, 32, 64)
    pool_after: tuple = (2, 4)  # 1-based conv layer numbers
    fc_width: int = 128
    learning_rate: float = 0.005
    iterations: int = 400
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sample_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd and >= 1, got {self.patch_size}")
        if len(self.conv_kernels) != len(self.conv_channels) or not self.conv_kernels:
            raise ConfigError("conv_kernels and conv_channels must be non-empty and equal length")
        if any(k < 1 or k % 2 == 0 for k in self.conv_kernels):
            raise ConfigError(f"conv kernel sizes must be odd, got {self.conv_kernels}")
        if any(c < 1 for c in self.conv_channels) or self.fc_width < 1:
            raise ConfigError("layer widths must be positive")
        if any(not 1 <= p <= len(self.conv_kernels) for p in self.pool_after):
            raise ConfigError(f"pool_after entries must name conv layers, got {self.pool_after}")
        if self.spatial_out() < 1:
            raise ConfigError(f"patch_size {self.patch_size} is too small for "
                              f"{len(self.pool_after)} pooling layers")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError("iterations must be >= 0 and batch_size >= 1")
        if not 0 < self.sample_fraction <= 1:
            raise ConfigError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")

    def spatial_out(self):
        s = self.patch_size
        for _ in self.pool_after:
            s //= 2
        return s


@dataclass
class CnnModel:
    config: CnnConfig
    in_channels: int
    class_ids: tuple
    params: dict
    feature_mean: np.ndarray = None
    feature_std: np.ndarray = None

    def __post_init__(self):
        if self.feature_mean is None:
            self.feature_mean = np.zeros(self.in_channels)
        if self.feature_std is None:
            self.feature_std = np.ones(self.in_channels)

    @property
    def num_classes(self):
        return len(self.class_ids)


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)
    step_loss: list = field(default_factory=list)
    train_accuracy: float = float("nan")
    wall_time: float = 0.0
    num_train: int = 0


def param_shapes(cfg, in_channels, num_classes):
    """Parameter names and shapes in declaration (serialization) order."""
    shapes = []
    cin = in_channels
    for n, (k, cout) in enumerate(zip(cfg.conv_kernels, cfg.conv_channels), start=1):
        shapes.append((f"conv{n}.weight", (k, k, cin, cout)))
        shapes.append((f"conv{n}.bias", (cout,)))
        cin = cout
    flat = cfg.spatial_out() ** 2 * cin
    shapes.append(("fc.weight", (flat, cfg.fc_width)))
    shapes.append(("fc.bias", (cfg.fc_width,)))
    shapes.append(("softmax.weight", (cfg.fc_width, num_classes)))
    return shapes


def _fans(name, shape):
    if name.startswith("conv"):
        k = shape[0] * shape[1]
        return k * shape[2], k * shape[3]
    return shape[0], shape[1]


def init_model(cfg, in_channels, class_ids, rng=None):
    """Glorot-uniform weights and zero biases, rounded to float32 precision."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    params = {}
    for name, shape in param_shapes(cfg, in_channels, len(class_ids)):
        if name.endswith("bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(name, shape)
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-lim, lim, size=shape).astype(np.float32).astype(np.float64)
    return CnnModel(cfg, in_channels, tuple(class_ids), params)


# --- layers -------------------------------------------------------------------

def _im2col(a, k):
    p = k // 2
    ap = np.pad(a, ((0, 0), (p, p), (p, p), (0, 0))) if p else a
    win = sliding_window_view(ap, (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
    b, h, w, c = a.shape
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b * h * w, k * k * c)


def conv_forward(a, weight, bias):
    k, _, cin, cout = weight.shape
    b, h, w, _ = a.shape
    cols = _im2col(a, k)
    out = cols @ weight.reshape(k * k * cin, cout) + bias
    return out.reshape(b, h, w, cout), cols


def conv_backward(dout, cols, weight, in_shape, need_input_grad=True):
    k, _, cin, cout = weight.shape
    b, h, w, _ = in_shape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(weight.shape)
    db = d2.sum(axis=0)
    if not need_input_grad:
        return None, dw, db
    dcols = (d2 @ weight.reshape(k * k * cin, cout).T).reshape(b, h, w, k, k, cin)
    p = k // 2
    dpad = np.zeros((b, h + 2 * p, w + 2 * p, cin))
    for i in range(k):
        for j in range(k):
            dpad[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
    return dpad[:, p:p + h, p:p + w, :], dw, db


def pool_forward(a):
    """2x2/stride-2 max pooling (trailing odd row/column dropped)."""
    b, h, w, c = a.shape
    ho, wo = h // 2, w // 2
    blocks = a[:, :2 * ho, :2 * wo, :].reshape(b, ho, 2, wo, 2, c)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def pool_backward(dout, arg, in_shape):
    b, h, w, c = in_shape
    ho, wo = dout.shape[1:3]
    dblocks = np.zeros((b, ho, wo, c, 4))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    dblocks = dblocks.reshape(b, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    da = np.zeros(in_shape)
    da[:, :2 * ho, :2 * wo, :] = dblocks.reshape(b, 2 * ho, 2 * wo, c)
    return da


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean of ``-log p_y`` with probabilities floored at 1e-12."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, PROB_FLOOR)).mean())


# --- network ------------------------------------------------------------------

def _check_input(model, patches):
    patches = np.asarray(patches, dtype=np.float64)
    single = patches.ndim == 3
    if single:
        patches = patches[None]
    p = model.config.patch_size
    if patches.ndim != 4 or patches.shape[1:] != (p, p, model.in_channels):
        raise ShapeError(f"expected patches of shape (B, {p}, {p}, {model.in_channels}), "
                         f"got {patches.shape if not single else patches.shape[1:]}")
    return patches, single


def _forward(model, x):
    cfg, prm = model.config, model.params
    cache = []
    a = x
    for n in range(1, len(cfg.conv_kernels) + 1):
        z, cols = conv_forward(a, prm[f"conv{n}.weight"], prm[f"conv{n}.bias"])
        cache.append(("conv", n, cols, a.shape, z))
        a = np.maximum(z, 0.0)
        if n in cfg.pool_after:
            pre = a.shape
            a, arg = pool_forward(a)
            cache.append(("pool", n, arg, pre))
    flat_shape = a.shape
    af = a.reshape(a.shape[0], -1)
    zf = af @ prm["fc.weight"] + prm["fc.bias"]
    h = np.maximum(zf, 0.0)
    logits = h @ prm["softmax.weight"]
    return logits, (cache, flat_shape, af, zf, h)


def forward(model, patches):
    """Class probabilities for one patch ``(P, P, D)`` or a batch ``(B, P, P, D)``."""
    x, single = _check_input(model, patches)
    probs = softmax(_forward(model, x)[0])
    return probs[0] if single else probs


def backward(model, patches, labels, loss_scale=1.0):
    """Gradients of ``loss_scale *`` mean cross-entropy for every parameter.

    ``labels`` are class indices ``0..C-1``. Returns ``(loss, grads)``.
    """
    x, single = _check_input(model, patches)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape != (x.shape[0],):
        raise ShapeError(f"{labels.shape[0]} labels for {x.shape[0]} patches")
    cfg, prm = model.config, model.params
    logits, (cache, flat_shape, af, zf, h) = _forward(model, x)
    probs = softmax(logits)
    loss = loss_scale * cross_entropy(probs, labels)

    b = x.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits *= loss_scale / b
    grads = {"softmax.weight": h.T @ dlogits}
    dh = dlogits @ prm["softmax.weight"].T
    dzf = dh * (zf > 0)
    grads["fc.weight"] = af.T @ dzf
    grads["fc.bias"] = dzf.sum(axis=0)
    da = (dzf @ prm["fc.weight"].T).reshape(flat_shape)
    for entry in reversed(cache):
        if entry[0] == "pool":
            _, _, arg, pre = entry
            da = pool_backward(da, arg, pre)
        else:
            _, n, cols, in_shape, z = entry
            dz = da * (z > 0)
            da, dw, dbias = conv_backward(dz, cols, prm[f"conv{n}.weight"], in_shape, n > 1)
            grads[f"conv{n}.weight"] = dw
            grads[f"conv{n}.bias"] = dbias
    return loss, {k: grads[k] for k in prm}


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# --- patches ------------------------------------------------------------------

def pad_field(features, patch_size):
    r = patch_size // 2
    return np.pad(np.asarray(features, dtype=np.float64), ((r, r), (r, r), (0, 0)),
                  mode="symmetric")


def extract_patch(features, i, j, patch_size):
    """Window of ``patch_size`` centred on ``(i, j)``, mirror-padded at borders."""
    return extract_patches(pad_field(features, patch_size), [i], [j], patch_size)[0]


def extract_patches(padded, rows, cols, patch_size):
    """Patches from an already padded field; ``(i, j)`` are unpadded coordinates."""
    win = sliding_window_view(padded, (patch_size, patch_size), axis=(0, 1))
    return win[np.asarray(rows), np.asarray(cols)].transpose(0, 2, 3, 1)


def standardize(features, model):
    return (np.asarray(features, dtype=np.float64) - model.feature_mean) / model.feature_std


# --- training and inference ----------------------------------------------------

def _batch_schedule(n, batch_size, steps, rng):
    need = steps * batch_size
    perms = [rng.permutation(n) for _ in range(-(-need // n))] if need else []
    order = np.concatenate(perms) if perms else np.zeros(0, dtype=np.intp)
    return order[:need].reshape(steps, batch_size) if need else order.reshape(0, batch_size)


def round_to_float32(params):
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def train(features, labels, cfg=None):
    """Fit the head on a stratified sample of labelled pixels.

    Returns ``(CnnModel, TrainReport)``. Iterations are mini-batch Adam
    steps. Parameters are rounded to float32 at the end so a serialized model
    classifies exactly like the in-memory one.
    """
    cfg = cfg or CnnConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[:2] != labels.shape:
        raise ShapeError(f"feature grid {features.shape[:2]} != label grid {labels.shape}")
    class_ids = tuple(int(c) for c in np.unique(labels) if c != 0)
    if len(class_ids) < 2:
        raise NoLabels(f"training needs at least 2 labelled classes, found {len(class_ids)}")
    started = time.perf_counter()
    h, w, d = features.shape
    idx = stratified_sample(labels, cfg.sample_fraction, cfg.seed)
    rows, cols = idx // w, idx % w
    lut = np.zeros(int(labels.max()) + 1, dtype=np.intp)
    lut[list(class_ids)] = np.arange(len(class_ids))
    y = lut[labels.reshape(-1)[idx]]

    init_ss, batch_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init_model(cfg, d, class_ids, np.random.default_rng(init_ss))
    train_px = features[rows, cols]
    model.feature_mean = train_px.mean(axis=0)
    std = train_px.std(axis=0)
    model.feature_std = np.where(std > 1e-12, std, 1.0)
    padded = pad_field(standardize(features, model), cfg.patch_size)

    report = TrainReport(num_train=int(idx.size))
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    schedule = _batch_schedule(idx.size, cfg.batch_size, cfg.iterations,
                               np.random.default_rng(batch_ss))
    steps_per_epoch = max(1, -(-idx.size // cfg.batch_size))
    for step, sel in enumerate(schedule):
        x = extract_patches(padded, rows[sel], cols[sel], cfg.patch_size)
        loss, grads = backward(model, x, y[sel])
        if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
            raise DivergedLoss(f"non-finite loss or gradient at step {step}")
        opt.step(model.params, grads)
        report.step_loss.append(loss)
        if (step + 1) % steps_per_epoch == 0 or step + 1 == len(schedule):
            start = (step // steps_per_epoch) * steps_per_epoch
            report.epoch_loss.append(float(np.mean(report.step_loss[start:step + 1])))
    if not all(np.isfinite(v).all() for v in model.params.values()):
        raise DivergedLoss("parameters became non-finite")
    model.params = round_to_float32(model.params)

    pred = _predict_indices(model, padded, rows, cols)
    report.train_accuracy = float(np.mean(pred == y)) if idx.size else float("nan")
    report.wall_time = time.perf_counter() - started
    return model, report


def _predict_indices(model, padded, rows, cols, workers=1):
    p = model.config.patch_size

    def run(lo, hi):
        logits = _forward(model, extract_patches(padded, rows[lo:hi], cols[lo:hi], p))[0]
        return softmax(logits).argmax(axis=-1)

    parts = map_chunks(run, len(rows), INFER_CHUNK, workers)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)


def predict_proba_field(model, features, workers=None):
    features = np.asarray(features)
    if features.ndim != 3 or features.shape[2] != model.in_channels:
        raise ShapeError(f"model expects {model.in_channels} feature channels, "
                         f"field has shape {features.shape}")
    h, w, _ = features.shape
    p = model.config.patch_size
    padded = pad_field(standardize(features, model), p)
    rows, cols = np.divmod(np.arange(h * w), w)

    def run(lo, hi):
        return softmax(_forward(model, extract_patches(padded, rows[lo:hi], cols[lo:hi], p))[0])

    return np.concatenate(map_chunks(run, h * w, INFER_CHUNK, workers)).reshape(h, w, -1)


def classify_field(model, features, workers=None):
    """Label map of class ids; ties go to the lower class id."""
    features = np.asarray(features)
    if features.ndim != 3 or features.shape[2] != model.in_channels:
        raise ShapeError(f"model expects {model.in_channels} feature channels, "
                         f"field has shape {features.shape}")
    h, w, _ = features.shape
    padded = pad_field(standardize(features, model), model.config.patch_size)
    rows, cols = np.divmod(np.arange(h * w), w)
    idx = _predict_indices(model, padded, rows, cols, workers)
    return np.asarray(model.class_ids, dtype=np.uint8)[idx].reshape(h, w)

