"""Worst-case robustness audits of linear softmax classifiers.

The question under audit: a model that looks accurate on clean test data
can be driven to chance by rotating (or rescaling) its inputs, and how
much of that is repaired by (a) augmenting training with random or
worst-case transforms versus (b) canonicalizing inputs.  Everything here
is deliberately small and deterministic — a linear softmax head on raw
features, plain minibatch gradient descent, fixed transform grids — so
that identical seeds reproduce identical models and reports byte for
byte.

Training modes:

  plain            clean samples only
  random_augment   one random orbit transform per sample per epoch
  adversarial      the worst of k sampled transforms per sample (by the
                   sample's current loss)
  mixed            clean loss plus the adversarial loss
  adversarial_alp  adversarial loss plus lam * ||z - z_hat||^2 pairing
                   the clean and adversarial logits
  adversarial_kl   adversarial loss plus lam * KL(softmax(z) || softmax(z_hat))

random_augment runs through the same machinery as adversarial with k=1,
and the pairing term is skipped entirely when lam == 0, so the
equivalences (random_augment == adversarial@k=1, adversarial_alp@lam=0 ==
adversarial) hold bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import canonicalize_similarity
from .image import GrayImage, SCHEMES, canonicalize_image, rotate_image
from .formats import ReportDocument

MODES = ("plain", "random_augment", "adversarial", "mixed",
         "adversarial_alp", "adversarial_kl")

# Multiplicative inputs for the scale audit.
SCALE_FACTORS = (0.001, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0, 1000.0)

GRID_STEPS_3D = 16

_CLOUD_CLASSES = ("shell", "box", "tube", "cross")
_IMAGE_CLASSES = ("disc", "bar", "wedge", "blobs")

# The class templates and shape parameters are fixed; the user-facing seed
# varies only the per-sample perturbations, so datasets generated with
# different seeds are draws from the same four class distributions.
_TEMPLATE_SEED = 715225739


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True)
class LabeledDataset:
    """Samples of one kind ('image' or 'cloud') with integer labels."""

    kind: str
    samples: tuple
    class_names: tuple[str, ...]
    seed: int

    def __post_init__(self):
        if self.kind not in ("image", "cloud"):
            raise ValueError(f"kind must be 'image' or 'cloud', got {self.kind!r}")
        for _, label in self.samples:
            if not 0 <= label < len(self.class_names):
                raise ValueError(f"label {label} outside the declared classes")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=int)


def gen_synthetic_clouds(seed: int, n_per_class: int = 40,
                         n_points: int = 64) -> LabeledDataset:
    """Four-class point-cloud suite: jittered copies of fixed templates.

    Each class is one fixed template (a sphere shell, box surface, tube,
    or two crossed planes) with anisotropic axis scales of roughly
    1.3 : 1.0 : 0.7 in standard deviation, so principal axes are well
    separated; point 0 is overwritten with an off-axis anchor that pins
    the canonical sign choices away from zero.  Samples add Gaussian
    jitter (0.03) and an independent per-axis stretch in [0.92, 1.08].
    Row order is meaningful and shared across samples, which is what lets
    a linear model on raw coordinates separate the classes.
    """
    if n_per_class < 1 or n_points < 8:
        raise ValueError("need n_per_class >= 1 and n_points >= 8")
    trng = np.random.default_rng(_TEMPLATE_SEED)
    templates = []
    for name in _CLOUD_CLASSES:
        if name == "shell":
            w = trng.normal(size=(n_points, 3))
            pts = w / np.linalg.norm(w, axis=1, keepdims=True)
        elif name == "box":
            axes = trng.integers(0, 3, size=n_points)
            signs = trng.choice([-1.0, 1.0], size=n_points)
            pts = trng.uniform(-1.0, 1.0, size=(n_points, 3))
            pts[np.arange(n_points), axes] = signs
        elif name == "tube":
            phi = trng.uniform(0.0, 2.0 * np.pi, size=n_points)
            pts = np.stack([np.cos(phi), np.sin(phi),
                            trng.uniform(-1.0, 1.0, size=n_points)], axis=1)
        else:  # cross: two orthogonal plane patches
            half = n_points // 2
            a = trng.uniform(-1.0, 1.0, size=(half, 2))
            b = trng.uniform(-1.0, 1.0, size=(n_points - half, 2))
            pts = np.zeros((n_points, 3))
            pts[:half, 0], pts[:half, 1] = a[:, 0], a[:, 1]
            pts[half:, 0], pts[half:, 2] = b[:, 0], b[:, 1]
        pts[0] = (1.1, 0.8, 0.6)
        pts = pts - pts.mean(axis=0)
        pts = pts * (np.array([1.3, 1.0, 0.7]) / pts.std(axis=0))
        templates.append(pts)

    rng = np.random.default_rng(seed)
    samples = []
    for label, template in enumerate(templates):
        for _ in range(n_per_class):
            jitter = rng.normal(scale=0.03, size=template.shape)
            stretch = rng.uniform(0.92, 1.08, size=3)
            samples.append(((template + jitter) * stretch, label))
    return LabeledDataset(kind="cloud", samples=tuple(samples),
                         class_names=_CLOUD_CLASSES, seed=seed)


def _smoothstep(x, width):
    # Logistic edge profile; width sets the transition scale.
    return 1.0 / (1.0 + np.exp(-x / width))


def gen_synthetic_images(seed: int, n_per_class: int = 12,
                         size: int = 32) -> LabeledDataset:
    """Four-class grayscale suite with a strong, stable orientation cue.

    Every class puts its mass off-center (a shifted disc, an oriented
    bar, a corner wedge, an unequal blob pair), so the circle-averaged
    gradient is far from zero and the canonical angle is well conditioned
    for every sample.  The seed jitters positions, sizes and amplitudes
    mildly around fixed class parameters.
    """
    if n_per_class < 1 or size < 16:
        raise ValueError("need n_per_class >= 1 and size >= 16")
    idx = np.arange(size, dtype=float)
    z2 = (idx[None, :] + 0.5) / size
    z1 = (size - idx[:, None] - 0.5) / size

    rng = np.random.default_rng(seed)
    samples = []
    for label, name in enumerate(_IMAGE_CLASSES):
        for _ in range(n_per_class):
            base = np.full((size, size), 0.06)
            if name == "disc":
                c1 = 0.38 + 0.04 * rng.standard_normal()
                c2 = 0.61 + 0.04 * rng.standard_normal()
                radius = 0.17 + 0.02 * rng.standard_normal()
                amp = 0.85 + 0.04 * rng.standard_normal()
                d = np.hypot(z1 - c1, z2 - c2)
                base += amp * _smoothstep(radius - d, 0.05)
            elif name == "bar":
                c1 = 0.42 + 0.03 * rng.standard_normal()
                c2 = 0.57 + 0.03 * rng.standard_normal()
                phi = math.radians(35.0 + 8.0 * rng.standard_normal())
                half_len = 0.26 + 0.02 * rng.standard_normal()
                half_wid = 0.08 + 0.01 * rng.standard_normal()
                xi = (z2 - c2) * math.cos(phi) + (z1 - c1) * math.sin(phi)
                eta = -(z2 - c2) * math.sin(phi) + (z1 - c1) * math.cos(phi)
                base += 0.8 * (_smoothstep(half_len - np.abs(xi), 0.03)
                               * _smoothstep(half_wid - np.abs(eta), 0.03))
            elif name == "wedge":
                a = 0.56 + 0.03 * rng.standard_normal()
                b = 0.53 + 0.03 * rng.standard_normal()
                amp = 0.75 + 0.04 * rng.standard_normal()
                base += amp * (_smoothstep(z2 - a, 0.06)
                               * _smoothstep(z1 - b, 0.06))
            else:  # blobs
                p1 = (0.40 + 0.03 * rng.standard_normal(),
                      0.63 + 0.03 * rng.standard_normal())
                p2 = (0.64 + 0.03 * rng.standard_normal(),
                      0.34 + 0.03 * rng.standard_normal())
                d1 = (z1 - p1[0]) ** 2 + (z2 - p1[1]) ** 2
                d2 = (z1 - p2[0]) ** 2 + (z2 - p2[1]) ** 2
                base += 0.85 * np.exp(-d1 / (2 * 0.11 ** 2))
                base += 0.50 * np.exp(-d2 / (2 * 0.08 ** 2))
            samples.append((GrayImage(base), label))
    return LabeledDataset(kind="image", samples=tuple(samples),
                         class_names=_IMAGE_CLASSES, seed=seed)


# ---------------------------------------------------------------------------
# Model and transforms


@dataclass
class LinearSoftmaxModel:
    """Linear softmax classifier on flattened features.

    kind fixes the feature layout (raveled pixels for images, raveled
    fixed-order coordinates for clouds); canonicalize records whether
    inputs pass through the canonicalizer never, at both train and test
    time, or at test time only.  scheme and sigma parameterize the image
    canonicalizer, and mode records how the model was trained; all are
    carried so a saved model audits identically after loading.
    """

    weights: np.ndarray
    bias: np.ndarray
    kind: str
    canonicalize: str = "off"
    scheme: str | None = None
    sigma: float = 1.0
    mode: str = "plain"

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for train_classifier; validated on construction."""

    mode: str = "plain"
    k: int = 10
    lam: float = 0.0
    epochs: int = 200
    learning_rate: float = 0.5
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0
    canonicalize: str = "off"
    scheme: str = "bilinear"
    sigma: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam < 0.0 or self.weight_decay < 0.0:
            raise ValueError("lam and weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (self.learning_rate > 0.0):
            raise ValueError("learning_rate must be positive")
        if self.canonicalize not in ("off", "train_and_test", "test_only"):
            raise ValueError(f"bad canonicalize setting {self.canonicalize!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.sigma > 0.0):
            raise ValueError("sigma must be positive")


def rotation_about(axis: int, angle: float) -> np.ndarray:
    """Rotation matrix about a coordinate axis, for row-vector clouds (X @ R)."""
    c, s = math.cos(angle), math.sin(angle)
    if axis == 0:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 1:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == 2:
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"axis must be 0, 1 or 2, got {axis}")


def rotation_grid_3d(steps: int = GRID_STEPS_3D) -> list[tuple[str, np.ndarray]]:
    """The steps x steps audit grid: Rz(2 pi i / steps) @ Rx(2 pi j / steps)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    grid = []
    for i in range(steps):
        ri = rotation_about(2, 2.0 * np.pi * i / steps)
        for j in range(steps):
            rj = rotation_about(0, 2.0 * np.pi * j / steps)
            grid.append((f"{i}:{j}", ri @ rj))
    return grid


def cloud_canonicalizer(sign_reference: str = "first"):
    """Datum-level canonicalizer for clouds (similarity normalization)."""

    def canon(points):
        return canonicalize_similarity(points, sign_reference=sign_reference)[0]

    return canon


def image_canonicalizer(scheme: str = "bilinear", sigma: float = 1.0):
    """Datum-level canonicalizer for images (rotation normalization)."""

    def canon(img):
        return canonicalize_image(img, scheme=scheme, sigma=sigma).canonical

    return canon


def _default_canonicalizer(kind: str, scheme: str | None, sigma: float):
    if kind == "cloud":
        return cloud_canonicalizer()
    return image_canonicalizer(scheme or "bilinear", sigma)


def _featurize(kind: str, datum) -> np.ndarray:
    if kind == "image":
        return datum.pixels.ravel()
    return np.asarray(datum, dtype=float).ravel()


# ---------------------------------------------------------------------------
# Training


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _ce_grad(model_w, model_b, feats, labels):
    """Mean cross-entropy gradient over a batch; returns (gW, gb, logits)."""
    z = feats @ model_w.T + model_b
    logp = _log_softmax(z)
    g = np.exp(logp)
    g[np.arange(len(labels)), labels] -= 1.0
    g /= len(labels)
    return g.T @ feats, g.sum(axis=0), z


def _per_sample_ce(model_w, model_b, feats, labels):
    z = feats @ model_w.T + model_b
    logp = _log_softmax(z)
    return -logp[np.arange(len(labels)), labels]


class _TransformSampler:
    """Draws random orbit transforms and applies them to raw data.

    Clouds draw uniformly from the 3-D audit grid; images draw a uniform
    angle in [0, 2 pi) and rotate with the configured scheme.  Draw order
    is fixed (per sample, then per candidate), which is what makes two
    runs with the same seed — and the random_augment / adversarial@k=1
    pair — consume identical random streams.
    """

    def __init__(self, kind: str, scheme: str, rng: np.random.Generator):
        self.kind = kind
        self.scheme = scheme
        self.rng = rng
        self._grid = [r for _, r in rotation_grid_3d()] if kind == "cloud" else None

    def draw(self, datum):
        if self.kind == "cloud":
            R = self._grid[int(self.rng.integers(len(self._grid)))]
            return np.asarray(datum) @ R
        return rotate_image(datum, float(self.rng.uniform(0.0, 2.0 * np.pi)),
                            self.scheme)


def train_classifier(data: LabeledDataset, cfg: TrainConfig,
                     canonicalizer=None) -> LinearSoftmaxModel:
    """Fit the linear softmax head by plain minibatch gradient descent.

    Weights start at zero (the objective is convex, so no random init is
    needed) and every random draw comes from generators seeded by
    cfg.seed, making the result a deterministic function of (data, cfg).
    The canonicalizer defaults to the standard one for the data kind and
    is applied according to cfg.canonicalize.  Raises ValueError if the
    parameters stop being finite (diverged learning rate).
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if canonicalizer is None:
        canonicalizer = _default_canonicalizer(data.kind, cfg.scheme, cfg.sigma)
    canon_train = cfg.canonicalize == "train_and_test"

    def prepare(datum):
        return _featurize(data.kind, canonicalizer(datum) if canon_train else datum)

    clean_feats = np.stack([prepare(datum) for datum, _ in data.samples])
    labels = data.labels()
    n, n_features = clean_feats.shape
    n_classes = data.n_classes

    W = np.zeros((n_classes, n_features))
    b = np.zeros(n_classes)

    shuffle_rng, aug_rng = (np.random.default_rng(s)
                            for s in np.random.SeedSequence(cfg.seed).spawn(2))
    sampler = _TransformSampler(data.kind, cfg.scheme, aug_rng)
    k = 1 if cfg.mode == "random_augment" else cfg.k
    pairing = cfg.mode in ("adversarial_alp", "adversarial_kl") and cfg.lam > 0.0

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            yb = labels[idx]
            if cfg.mode == "plain":
                gW, gb, _ = _ce_grad(W, b, clean_feats[idx], yb)
            else:
                # Worst of k freshly drawn transforms per sample, judged by
                # the sample's current loss.  k is 1 for random_augment.
                adv = np.empty((len(idx), n_features))
                for row, sample_index in enumerate(idx):
                    datum = data.samples[sample_index][0]
                    cand = np.stack([prepare(sampler.draw(datum))
                                     for _ in range(k)])
                    losses = _per_sample_ce(W, b, cand,
                                            np.full(k, yb[row]))
                    adv[row] = cand[int(np.argmax(losses))]
                gW, gb, z_adv = _ce_grad(W, b, adv, yb)
                if cfg.mode == "mixed":
                    gW2, gb2, _ = _ce_grad(W, b, clean_feats[idx], yb)
                    gW += gW2
                    gb += gb2
                elif pairing:
                    z_clean = clean_feats[idx] @ W.T + b
                    if cfg.mode == "adversarial_alp":
                        # d/dz ||z - z_hat||^2, averaged over the batch
                        d_adv = 2.0 * (z_adv - z_clean) / len(idx)
                        d_clean = -d_adv
                    else:
                        logp = _log_softmax(z_clean)
                        logq = _log_softmax(z_adv)
                        p = np.exp(logp)
                        kl = ((p * (logp - logq)).sum(axis=1, keepdims=True))
                        d_adv = (np.exp(logq) - p) / len(idx)
                        d_clean = p * (logp - logq - kl) / len(idx)
                    gW += cfg.lam * (d_adv.T @ adv + d_clean.T @ clean_feats[idx])
                    gb += cfg.lam * (d_adv + d_clean).sum(axis=0)
            if cfg.weight_decay > 0.0:
                # L2 on the weights only; the bias stays free, which is what
                # leaves a scale-independent term in the logits.
                gW += cfg.weight_decay * W
            W -= cfg.learning_rate * gW
            b -= cfg.learning_rate * gb
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError(
                f"training diverged at epoch {epoch}: non-finite parameters "
                f"(mode={cfg.mode}, learning_rate={cfg.learning_rate})")

    return LinearSoftmaxModel(weights=W, bias=b, kind=data.kind,
                              canonicalize=cfg.canonicalize,
                              scheme=cfg.scheme if data.kind == "image" else None,
                              sigma=cfg.sigma, mode=cfg.mode)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class AuditReport:
    """Accuracies of one model over one transform family.

    curve[i] is the accuracy when every test input is hit with transform
    grid[i]; `average` is the mean of the curve and `worst` the fraction
    of samples classified correctly under every transform on the grid
    (per_sample_worst holds that flag per sample).  `clean` is accuracy
    on untransformed inputs.
    """

    kind: str
    scheme: str
    canonicalized: bool
    n_samples: int
    clean: float
    average: float
    worst: float
    grid: tuple[str, ...]
    curve: np.ndarray
    per_sample_worst: np.ndarray
    mode: str = ""

    def document(self) -> ReportDocument:
        return ReportDocument(kind=self.kind, mode=self.mode, scheme=self.scheme,
                              canonicalized=self.canonicalized,
                              n_samples=self.n_samples, clean=self.clean,
                              average=self.average, worst=self.worst,
                              grid=self.grid, curve=np.asarray(self.curve, float))


def _test_features(model, canonicalizer, data, transform=None):
    feats = []
    use_canon = model.canonicalize in ("train_and_test", "test_only")
    for datum, _ in data.samples:
        if transform is not None:
            datum = transform(datum)
        if use_canon:
            datum = canonicalizer(datum)
        feats.append(_featurize(model.kind, datum))
    return np.stack(feats)


def _sweep(model, data, transforms, kind, scheme, canonicalizer=None) -> AuditReport:
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.kind != model.kind:
        raise ValueError(f"model expects {model.kind} data, got {data.kind}")
    if canonicalizer is None:
        canonicalizer = _default_canonicalizer(model.kind, model.scheme, model.sigma)
    labels = data.labels()
    clean_pred = model.predict(_test_features(model, canonicalizer, data))
    clean = float(np.mean(clean_pred == labels))
    correct = np.empty((len(data), len(transforms)), dtype=bool)
    grid_labels = []
    for gi, (label, transform) in enumerate(transforms):
        feats = _test_features(model, canonicalizer, data, transform)
        correct[:, gi] = model.predict(feats) == labels
        grid_labels.append(label)
    curve = correct.mean(axis=0)
    per_sample_worst = correct.all(axis=1)
    return AuditReport(kind=kind, scheme=scheme,
                       canonicalized=model.canonicalize != "off",
                       n_samples=len(data), clean=clean,
                       average=float(curve.mean()),
                       worst=float(per_sample_worst.mean()),
                       grid=tuple(grid_labels), curve=curve,
                       per_sample_worst=per_sample_worst,
                       mode=model.mode)


def evaluate_rotation_sweep_2d(model, data: LabeledDataset,
                               scheme: str = "bilinear",
                               canonicalizer=None) -> AuditReport:
    """Accuracy under content rotations at every whole degree.

    `scheme` is the resampler used to build the rotated test inputs (the
    attack side); the model's own canonicalization scheme is whatever it
    was trained with.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    transforms = [
        (str(deg), (lambda img, a=math.radians(deg): rotate_image(img, a, scheme)))
        for deg in range(360)
    ]
    return _sweep(model, data, transforms, "rotation2d", scheme, canonicalizer)


def evaluate_rotation_grid_3d(model, data: LabeledDataset,
                              canonicalizer=None) -> AuditReport:
    """Accuracy under the full 3-D rotation grid (see rotation_grid_3d)."""
    transforms = [
        (label, (lambda X, R=R: np.asarray(X) @ R))
        for label, R in rotation_grid_3d()
    ]
    return _sweep(model, data, transforms, "rotation3d", "", canonicalizer)


def evaluate_scale_sweep(model, data: LabeledDataset,
                         canonicalizer=None) -> AuditReport:
    """Accuracy under global rescaling of cloud coordinates."""
    if data.kind != "cloud":
        raise ValueError("scale sweep is defined for cloud data")
    transforms = [
        (_fmt_scale(s), (lambda X, s=s: np.asarray(X) * s))
        for s in SCALE_FACTORS
    ]
    return _sweep(model, data, transforms, "scale", "", canonicalizer)


def _fmt_scale(s: float) -> str:
    return f"{s:g}"


def softmax_curve(model, sample, angles, scheme: str = "bilinear",
                  canonicalizer=None) -> np.ndarray:
    """True-class softmax probability as the input spins through `angles`.

    Images rotate in-plane with `scheme`; clouds rotate about the z axis.
    Returns one probability per angle.
    """
    datum, label = sample
    if canonicalizer is None:
        canonicalizer = _default_canonicalizer(model.kind, model.scheme, model.sigma)
    use_canon = model.canonicalize in ("train_and_test", "test_only")
    probs = []
    for angle in np.asarray(angles, dtype=float):
        if model.kind == "image":
            moved = rotate_image(datum, float(angle), scheme)
        else:
            moved = np.asarray(datum) @ rotation_about(2, float(angle))
        if use_canon:
            moved = canonicalizer(moved)
        z = model.logits(_featurize(model.kind, moved)[None, :])
        probs.append(float(np.exp(_log_softmax(z))[0, label]))
    return np.array(probs)
