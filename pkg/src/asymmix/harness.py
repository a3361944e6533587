"""Repeated-run evaluation of clustering methods on labelled images."""

import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_image
from .baselines import fit_minibatch_kmeans
from .exceptions import ContractViolation
from .imageops import flatten
from .metrics import dice, wilcoxon_signed_rank
from .mixture import DEFAULT_K, DEFAULT_M, fit_em
from .segmentation import segment, select_foreground

METHODS = ("amm", "gmm", "mkmeans", "damm")


@dataclass(frozen=True)
class Method:
    """What to fit: ``name`` in :data:`METHODS` plus its sizes.

    ``damm_steps`` and ``damm_lr`` only matter for the network method.
    """

    name: str
    K: int = DEFAULT_K
    M: int = DEFAULT_M
    policy: str = "best-dice"
    damm_steps: int = 100
    damm_lr: float = 1e-4

    def __post_init__(self):
        if self.name not in METHODS:
            raise ContractViolation(f"unknown method {self.name!r}; choose from {METHODS}")
        check_count(self.K, "K")
        check_count(self.M, "M")

    def fit(self, images, seed):
        """Fit from scratch on the pooled pixels of ``images``."""
        if self.name == "damm":
            from .toynet import TrainConfig, train_loop

            config = TrainConfig(lr=self.damm_lr, steps=self.damm_steps, seed=seed,
                                 K=self.K, M=self.M)
            return train_loop(images, config).net
        X = np.concatenate([flatten(im) for im in images])
        if self.name == "mkmeans":
            return fit_minibatch_kmeans(X, self.K, seed=seed)
        M = self.M if self.name == "amm" else 1
        return fit_em(X, self.K, M, seed=seed)[0]


def as_method(method):
    return method if isinstance(method, Method) else Method(str(method))


@dataclass
class RunReport:
    """Per-round, per-image Dice and inference time for one method.

    ``dice`` and ``seconds`` are (rounds, images) arrays; ``chosen`` holds
    the foreground cluster picked for each image.
    """

    method: str
    seeds: list
    dice: np.ndarray
    seconds: np.ndarray
    chosen: np.ndarray
    image_names: list = field(default_factory=list)

    @property
    def round_means(self):
        return self.dice.mean(axis=1)

    @property
    def dice_best(self):
        """Mean Dice of the best round."""
        return float(self.round_means.max())

    @property
    def dice_mean(self):
        return float(self.round_means.mean())

    @property
    def dice_std(self):
        """Population standard deviation of the round means (0 for one round)."""
        return float(self.round_means.std())

    @property
    def seconds_per_image(self):
        return float(self.seconds.mean())

    def rows(self):
        """``(method, round, image, dice, seconds)`` for every evaluation."""
        for r in range(self.dice.shape[0]):
            for i in range(self.dice.shape[1]):
                name = self.image_names[i] if self.image_names else str(i)
                yield self.method, r, name, float(self.dice[r, i]), float(self.seconds[r, i])


def check_dataset(dataset):
    dataset = [(check_image(im), np.asarray(gt, dtype=bool)) for im, gt in dataset]
    if not dataset:
        raise ContractViolation("dataset is empty")
    for im, gt in dataset:
        if gt.shape != im.shape[:2]:
            raise ContractViolation(f"mask shape {gt.shape} does not match image {im.shape[:2]}")
    return dataset


def repeated_runs(method, dataset, rounds=10, seeds=None, image_names=None):
    """Fit ``method`` once per round and score every image.

    ``dataset`` is a list of ``(image, mask)`` pairs. Round ``r`` fits from
    scratch with ``seeds[r]`` (default ``r``) on all images pooled, then
    segments each image and records its Dice and the wall-clock seconds
    spent segmenting it.
    """
    method = as_method(method)
    dataset = check_dataset(dataset)
    rounds = check_count(rounds, "rounds")
    seeds = list(range(rounds)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != rounds:
        raise ContractViolation(f"need {rounds} seeds, got {len(seeds)}")
    images = [im for im, _ in dataset]
    scores = np.empty((rounds, len(dataset)))
    seconds = np.empty_like(scores)
    chosen = np.empty((rounds, len(dataset)), dtype=np.int64)
    for r, seed in enumerate(seeds):
        source = method.fit(images, seed)
        for i, (image, gt) in enumerate(dataset):
            start = time.perf_counter()
            labels, zmap = segment(image, source)
            seconds[r, i] = time.perf_counter() - start
            fg = select_foreground(labels, zmap if method.name == "damm" else source,
                                   method.policy, image=image, reference=gt)
            scores[r, i] = dice(fg.mask, gt).score
            chosen[r, i] = fg.index
    return RunReport(method.name, seeds, scores, seconds, chosen, list(image_names or []))


def compare(report, reference):
    """Paired Wilcoxon test of round means, ``report`` minus ``reference``."""
    if report.dice.shape[0] != reference.dice.shape[0]:
        raise ContractViolation("reports have different numbers of rounds")
    return wilcoxon_signed_rank(report.round_means, reference.round_means)


REPORT_HEADER = "method,round,image,dice,seconds"
SUMMARY_HEADER = "method,dice_best,dice_mean,dice_std,p_vs_reference"


def format_report(reports, reference=None, timing=True):
    """CSV text: one row per evaluation, then a summary block.

    ``p_vs_reference`` is empty for the reference method itself and when no
    reference is named. With ``timing=False`` the seconds column is left
    blank so reruns produce identical text.
    """
    lines = [REPORT_HEADER]
    for rep in reports:
        for name, r, image, score, secs in rep.rows():
            lines.append(f"{name},{r},{image},{score:.17g},{f'{secs:.6f}' if timing else ''}")
    lines += ["", SUMMARY_HEADER]
    ref = next((rep for rep in reports if rep.method == reference), None)
    for rep in reports:
        p = "" if ref is None or rep is ref else f"{compare(rep, ref).p_value:.17g}"
        lines.append(f"{rep.method},{rep.dice_best:.17g},{rep.dice_mean:.17g},{rep.dice_std:.17g},{p}")
    return "\n".join(lines) + "\n"
