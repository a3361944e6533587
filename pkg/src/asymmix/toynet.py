"""Small convolutional posterior network trained with a hybrid objective.

The network maps an RGB image to per-pixel posteriors: an encoder of two
3x3 convolutions (3->8->8), a decoder of one 3x3 convolution (8->8), ReLU
after each, then K heads. Head ``j`` is a 1x1 convolution 8->M whose
softmax over M is the y-map of sub-mixture ``j``; a fusion 1x1 convolution
over the concatenated y-maps (K*M->K) with a softmax over K gives the
z-map. All arrays are (H, W, ...) float64 and convolutions use zero
padding so outputs keep the input size.

Training alternates two updates per step. The mixture parameters are set in
closed form by the ordinary M-step, using the network posteriors as
responsibilities. The network weights then take one gradient-descent step on

    loss = -Q / N + beta * mean |flip(z(I)) - z(flip(I))|

where Q is the expected complete-data log-likelihood of the image pixels
under those posteriors. The mixture parameters are constants during
backpropagation.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_image, check_same_shape
from .exceptions import ContractViolation
from .imageops import apply_flip, flatten, photometric_augment
from .mixture import (
    DEFAULT_K,
    DEFAULT_M,
    AsymmetricMixture,
    Responsibilities,
    component_log_densities,
    default_reg,
    expected_complete_ll,
    init_model,
    m_step,
)

HIDDEN = 8
PROB_FLOOR = 1e-12
DEFAULT_BETA = 0.5
CONV_LAYERS = ("enc1", "enc2", "dec")
PARAM_NAMES = (
    "enc1.w", "enc1.b", "enc2.w", "enc2.b", "dec.w", "dec.b",
    "heads.w", "heads.b", "fusion.w", "fusion.b",
)


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True, eq=False)
class ToyNet:
    """Immutable weight set. ``params`` maps layer names to read-only arrays.

    Shapes: ``enc1.w`` (3, 3, 3, 8), ``enc2.w`` and ``dec.w`` (3, 3, 8, 8),
    ``heads.w`` (K, 8, M), ``fusion.w`` (K*M, K); biases match the last axis.
    """

    params: dict

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.params)
        if missing:
            raise ContractViolation(f"missing network weights: {sorted(missing)}")
        frozen = {}
        for name in PARAM_NAMES:
            a = np.array(self.params[name], dtype=np.float64, copy=True)
            a.setflags(write=False)
            frozen[name] = a
        K, _, M = frozen["heads.w"].shape
        expected = {
            "enc1.w": (3, 3, 3, HIDDEN), "enc1.b": (HIDDEN,),
            "enc2.w": (3, 3, HIDDEN, HIDDEN), "enc2.b": (HIDDEN,),
            "dec.w": (3, 3, HIDDEN, HIDDEN), "dec.b": (HIDDEN,),
            "heads.w": (K, HIDDEN, M), "heads.b": (K, M),
            "fusion.w": (K * M, K), "fusion.b": (K,),
        }
        for name, shape in expected.items():
            if frozen[name].shape != shape:
                raise ContractViolation(f"{name} has shape {frozen[name].shape}, expected {shape}")
        object.__setattr__(self, "params", frozen)

    @property
    def K(self):
        return self.params["heads.w"].shape[0]

    @property
    def M(self):
        return self.params["heads.w"].shape[2]

    @property
    def n_weights(self):
        return sum(a.size for a in self.params.values())

    def updated(self, grads, lr):
        """New net with ``w - lr * grad`` for every weight."""
        return ToyNet({k: self.params[k] - lr * grads[k] for k in PARAM_NAMES})


def _xavier(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_net(K=DEFAULT_K, M=DEFAULT_M, seed=0):
    """Xavier-uniform weights, zero biases."""
    K = check_count(K, "K")
    M = check_count(M, "M")
    rng = np.random.default_rng(seed)
    p = {}
    for name, c_in in zip(CONV_LAYERS, (3, HIDDEN, HIDDEN)):
        p[f"{name}.w"] = _xavier(rng, (3, 3, c_in, HIDDEN), 9 * c_in, 9 * HIDDEN)
        p[f"{name}.b"] = np.zeros(HIDDEN)
    p["heads.w"] = _xavier(rng, (K, HIDDEN, M), HIDDEN, M)
    p["heads.b"] = np.zeros((K, M))
    p["fusion.w"] = _xavier(rng, (K * M, K), K * M, K)
    p["fusion.b"] = np.zeros(K)
    return ToyNet(p)


# --------------------------------------------------------------------------
# layers


def _im2col(a):
    """(H, W, C) -> (H, W, 9C) of zero-padded 3x3 neighbourhoods, order (ky, kx, c)."""
    H, W, _ = a.shape
    pad = np.pad(a, ((1, 1), (1, 1), (0, 0)))
    return np.concatenate(
        [pad[ky:ky + H, kx:kx + W] for ky in range(3) for kx in range(3)], axis=-1
    )


def _col2im(dcols, C):
    H, W, _ = dcols.shape
    dpad = np.zeros((H + 2, W + 2, C))
    for idx in range(9):
        ky, kx = divmod(idx, 3)
        dpad[ky:ky + H, kx:kx + W] += dcols[..., idx * C:(idx + 1) * C]
    return dpad[1:-1, 1:-1]


def conv3x3(a, w, b):
    """Same-size 3x3 cross-correlation, ``w`` of shape (3, 3, C_in, C_out)."""
    return _im2col(a) @ w.reshape(-1, w.shape[-1]) + b


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(p, dp):
    return p * (dp - np.sum(p * dp, axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class ForwardCache:
    z: np.ndarray  # (H, W, K)
    y: np.ndarray  # (H, W, K, M)
    cols: tuple  # im2col input of each conv layer
    acts: tuple  # post-ReLU output of each conv layer
    y_raw: np.ndarray
    z_raw: np.ndarray


def _forward(image, net):
    p = net.params
    a = image
    cols, acts = [], []
    for name in CONV_LAYERS:
        c = _im2col(a)
        w = p[f"{name}.w"]
        a = np.maximum(c @ w.reshape(-1, w.shape[-1]) + p[f"{name}.b"], 0.0)
        cols.append(c)
        acts.append(a)
    y_raw = _softmax(np.einsum("hwc,kcm->hwkm", a, p["heads.w"]) + p["heads.b"])
    y = np.maximum(y_raw, PROB_FLOOR)
    H, W = image.shape[:2]
    z_raw = _softmax(y.reshape(H, W, -1) @ p["fusion.w"] + p["fusion.b"])
    z = np.maximum(z_raw, PROB_FLOOR)
    return ForwardCache(z, y, tuple(cols), tuple(acts), y_raw, z_raw)


def net_forward(image, net):
    """Posterior maps ``(z, y)`` of shapes (H, W, K) and (H, W, K, M).

    Softmax outputs are floored at 1e-12 so they stay strictly positive.
    """
    cache = _forward(check_image(image), net)
    return cache.z, cache.y


def _backward(net, cache, dz, dy):
    """Weight gradients given upstream gradients on the z- and y-maps."""
    p = net.params
    H, W, K = dz.shape
    M = net.M
    g = {}
    dz_logits = _softmax_backward(cache.z_raw, dz * (cache.z_raw >= PROB_FLOOR))
    y_flat = cache.y.reshape(H * W, K * M)
    dzl = dz_logits.reshape(H * W, K)
    g["fusion.w"] = y_flat.T @ dzl
    g["fusion.b"] = dzl.sum(axis=0)
    dy_total = dy + (dzl @ p["fusion.w"].T).reshape(H, W, K, M)
    dy_logits = _softmax_backward(cache.y_raw, dy_total * (cache.y_raw >= PROB_FLOOR))
    top = cache.acts[-1]
    g["heads.w"] = np.einsum("hwc,hwkm->kcm", top, dy_logits)
    g["heads.b"] = dy_logits.sum(axis=(0, 1))
    da = np.einsum("hwkm,kcm->hwc", dy_logits, p["heads.w"])
    for i in reversed(range(len(CONV_LAYERS))):
        name = CONV_LAYERS[i]
        w = p[f"{name}.w"]
        dpre = da * (cache.acts[i] > 0.0)
        cols = cache.cols[i]
        g[f"{name}.w"] = (cols.reshape(H * W, -1).T @ dpre.reshape(H * W, -1)).reshape(w.shape)
        g[f"{name}.b"] = dpre.sum(axis=(0, 1))
        if i:
            da = _col2im(dpre @ w.reshape(-1, w.shape[-1]).T, w.shape[2])
    return g


# --------------------------------------------------------------------------
# losses


def contrastive_loss(pred, pred_T, transform):
    """Mean absolute difference between ``transform(pred)`` and ``pred_T``.

    ``transform`` is ``"H"``, ``"V"`` or ``"I"`` (identity).
    """
    pred = np.asarray(pred, dtype=np.float64)
    pred_T = np.asarray(pred_T, dtype=np.float64)
    check_same_shape(pred, pred_T, "posterior maps")
    return float(np.mean(np.abs(apply_flip(pred, transform) - pred_T)))


@dataclass(frozen=True)
class LossReport:
    nll: float
    contrastive: float
    total: float


def combine(nll, contrastive, beta=DEFAULT_BETA):
    """``total = nll + beta * contrastive``."""
    if beta < 0:
        raise ContractViolation(f"beta must be non-negative, got {beta}")
    nll, contrastive = float(nll), float(contrastive)
    return LossReport(nll, contrastive, nll + beta * contrastive)


def responsibilities_from_maps(z, y):
    """Flatten (H, W, K) and (H, W, K, M) maps into pixel-row posteriors."""
    K, M = y.shape[2:]
    return Responsibilities(z.reshape(-1, K), y.reshape(-1, K, M))


@dataclass(frozen=True, eq=False)
class LossGraph:
    """Everything backpropagation needs from one hybrid-loss evaluation."""

    report: LossReport
    net: ToyNet
    model: AsymmetricMixture
    beta: float
    flip: str
    cache: ForwardCache
    cache_T: ForwardCache
    log_aphi: np.ndarray  # (H, W, K, M) log(alpha * phi) per pixel


def _hybrid_graph(image, net, model, beta, flip):
    image = check_image(image)
    if model.dims[:2] != (net.K, net.M):
        raise ContractViolation(
            f"model has K, M = {model.dims[:2]} but the net has {(net.K, net.M)}"
        )
    cache = _forward(image, net)
    cache_T = _forward(apply_flip(image, flip), net)
    X = flatten(image)
    N = X.shape[0]
    resp = responsibilities_from_maps(cache.z, cache.y)
    nll = -expected_complete_ll(X, model, resp) / N
    con = contrastive_loss(cache.z, cache_T.z, flip)
    log_aphi = component_log_densities(X, model) + np.log(model.alpha)[None]
    H, W = image.shape[:2]
    return LossGraph(
        combine(nll, con, beta), net, model, float(beta), flip, cache, cache_T,
        log_aphi.reshape(H, W, net.K, net.M),
    )


def hybrid_loss(image, image_T, net, model, beta=DEFAULT_BETA, flip="H"):
    """Hybrid objective on the pair ``(image, image_T)``.

    ``image_T`` must equal ``apply_flip(image, flip)``. The likelihood part is
    evaluated on ``image`` alone.
    """
    image = check_image(image)
    if not np.array_equal(apply_flip(image, flip), check_image(image_T)):
        raise ContractViolation(f"image_T is not the {flip!r} flip of image")
    return _hybrid_graph(image, net, model, beta, flip).report


def net_backward(graph):
    """Gradients of ``graph.report.total`` for every network weight."""
    cache, cache_T = graph.cache, graph.cache_T
    H, W, K = cache.z.shape
    N = H * W
    log_pi = np.log(graph.model.weights)
    # d(-Q/N)/dz and d(-Q/N)/dy
    dz = -(log_pi + np.sum(cache.y * graph.log_aphi, axis=-1)) / N
    dy = -(cache.z[..., None] * graph.log_aphi) / N
    diff = apply_flip(cache.z, graph.flip) - cache_T.z
    s = graph.beta * np.sign(diff) / diff.size
    dz = dz + apply_flip(s, graph.flip)
    g = _backward(graph.net, cache, dz, dy)
    g_T = _backward(graph.net, cache_T, -s, np.zeros_like(cache_T.y))
    return {k: g[k] + g_T[k] for k in PARAM_NAMES}


# --------------------------------------------------------------------------
# gradient check


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int  # weights whose +-step crossed a ReLU or |.| kink
    worst: tuple  # (param name, flat index)


def relative_error(a, b, floor=1e-10):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _kink_pattern(graph):
    """Which side of every ReLU and absolute-value kink the evaluation sits on."""
    parts = [act > 0.0 for c in (graph.cache, graph.cache_T) for act in c.acts]
    parts.append(np.sign(apply_flip(graph.cache.z, graph.flip) - graph.cache_T.z))
    return np.concatenate([p.ravel() for p in parts])


def gradient_check(seed=0, n_weights=100, step=1e-4, size=8, K=DEFAULT_K, M=DEFAULT_M,
                   beta=DEFAULT_BETA, flip="H"):
    """Compare analytic gradients with central differences on random weights.

    Uses a ``size`` x ``size`` synthetic cell image and a mixture fitted to
    the network's own posteriors, then perturbs randomly chosen weights by
    ``+-step``. A central difference is meaningless when the two perturbed
    evaluations straddle a kink of ReLU or ``|.|``; such weights are skipped,
    counted, and replaced by the next random pick until ``n_weights`` have
    been checked.
    """
    from .synth import gen_synthetic_cells

    rng = np.random.default_rng(seed)
    image, _ = gen_synthetic_cells(size, size, cell_count=2, seed=seed)
    net = init_net(K, M, seed=seed)
    model = update_theta(image, net)
    base = _hybrid_graph(image, net, model, beta, flip)
    grads = net_backward(base)
    base_kinks = _kink_pattern(base)
    sizes = np.array([net.params[k].size for k in PARAM_NAMES])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, worst_at, checked, skipped = 0.0, None, 0, 0
    for flat in rng.permutation(sizes.sum()):
        if checked == n_weights:
            break
        li = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, idx = PARAM_NAMES[li], int(flat - offsets[li])
        losses, smooth = [], True
        for sign in (1.0, -1.0):
            params = {k: np.array(v) for k, v in net.params.items()}
            params[name].flat[idx] += sign * step
            graph = _hybrid_graph(image, ToyNet(params), model, beta, flip)
            smooth &= bool(np.array_equal(_kink_pattern(graph), base_kinks))
            losses.append(graph.report.total)
        if not smooth:
            skipped += 1
            continue
        numeric = (losses[0] - losses[1]) / (2.0 * step)
        err = relative_error(grads[name].flat[idx], numeric)
        checked += 1
        if worst_at is None or err > worst:
            worst, worst_at = err, (name, idx)
    return GradCheckResult(float(worst), checked, skipped, worst_at)


def _total_loss(image, net, model, beta, flip):
    return _hybrid_graph(image, net, model, beta, flip).report.total


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    gamma: float = 0.97
    beta: float = DEFAULT_BETA
    steps: int = 100
    seed: int = 0
    K: int = DEFAULT_K
    M: int = DEFAULT_M
    augment: bool = False
    window: int = 5

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractViolation(f"learning rate must be positive, got {self.lr}")
        if self.beta < 0:
            raise ContractViolation(f"beta must be non-negative, got {self.beta}")
        if not 0 < self.gamma <= 1:
            raise ContractViolation(f"gamma must lie in (0, 1], got {self.gamma}")
        check_count(self.steps, "steps", minimum=0)
        check_count(self.window, "window")


def update_theta(image, net, reg=None):
    """Closed-form mixture update from the network posteriors of ``image``."""
    X = flatten(check_image(image))
    z, y = net_forward(image, net)
    return m_step(X, responsibilities_from_maps(z, y), default_reg(X) if reg is None else reg)


def train_step(image, net, model, config, flip="H", lr=None):
    """One hybrid update. Returns ``(net', model', LossReport)``.

    Order: forward, closed-form mixture update from the posteriors, loss
    with the updated mixture, one gradient-descent step on the weights.
    ``model`` is replaced outright by the closed-form update.
    """
    del model  # superseded by the closed-form update
    lr = config.lr if lr is None else float(lr)
    new_model = update_theta(image, net)
    graph = _hybrid_graph(image, net, new_model, config.beta, flip)
    if lr == 0.0:
        return net, new_model, graph.report
    return net.updated(net_backward(graph), lr), new_model, graph.report


@dataclass(frozen=True)
class TraceRow:
    step: int
    nll: float
    contrastive: float
    total: float
    lr: float

    def csv(self):
        return f"{self.step},{self.nll:.17g},{self.contrastive:.17g},{self.total:.17g},{self.lr:.17g}"


TRACE_HEADER = "step,nll,contrastive,total,lr"


@dataclass
class TrainResult:
    net: ToyNet
    model: AsymmetricMixture
    trace: list = field(default_factory=list)
    best_step: int = -1
    best_running_loss: float = float("inf")

    def trace_csv(self):
        return "\n".join([TRACE_HEADER] + [row.csv() for row in self.trace]) + "\n"


def train_loop(images, config):
    """Train a fresh network on ``images`` for ``config.steps`` steps.

    Each step draws an image and a random horizontal or vertical flip for the
    consistency pair. The learning rate decays by ``gamma`` after every pass
    over the image list. The returned net and mixture are the checkpoint
    with the lowest trailing mean of ``config.window`` total losses.
    """
    images = [check_image(im) for im in images]
    if not images:
        raise ContractViolation("train_loop needs at least one image")
    rng = np.random.default_rng(config.seed)
    net = init_net(config.K, config.M, seed=config.seed)
    model = init_model(flatten(images[0]), config.K, config.M, seed=config.seed,
                       strategy="kmeans++")
    result = TrainResult(net, model)
    if config.steps == 0:
        return result
    recent = []
    for step in range(config.steps):
        lr = config.lr * config.gamma ** (step // len(images))
        image = images[int(rng.integers(len(images)))]
        flip = ("H", "V")[int(rng.integers(2))]
        if config.augment:
            image = photometric_augment(image, seed=int(rng.integers(2**31 - 1)))
        new_net, model, report = train_step(image, net, model, config, flip=flip, lr=lr)
        result.trace.append(TraceRow(step, report.nll, report.contrastive, report.total, lr))
        recent = (recent + [report.total])[-config.window:]
        running = float(np.mean(recent))
        if running <= result.best_running_loss:
            # the weights that produced this loss, before the gradient step
            result.net, result.model = net, model
            result.best_step, result.best_running_loss = step, running
        net = new_net
    return result


def net_arrays(net):
    """Writable copies of the weights, in layer order."""
    return {k: np.array(net.params[k]) for k in PARAM_NAMES}


def net_from_arrays(arrays):
    return ToyNet(dict(arrays))


__all__ = [
    "ToyNet", "TrainConfig", "LossReport", "LossGraph", "TraceRow", "TrainResult",
    "GradCheckResult", "init_net", "net_forward", "contrastive_loss", "combine",
    "hybrid_loss", "net_backward", "gradient_check", "update_theta", "train_step",
    "train_loop", "conv3x3",
]
