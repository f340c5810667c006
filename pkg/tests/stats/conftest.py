import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260517)


@pytest.fixture
def kappa_oracle():
    """Weighted kappa straight from the formula, one cell at a time."""

    def compute(ref, pred, k, weight=lambda i, j, k: (i - j) ** 2 / (k - 1) ** 2):
        n = len(ref)
        observed = [[0.0] * k for _ in range(k)]
        for a, b in zip(ref, pred):
            observed[a][b] += 1.0 / n
        rows = [sum(observed[i]) for i in range(k)]
        cols = [sum(observed[i][j] for i in range(k)) for j in range(k)]
        disagreement = sum(
            weight(i, j, k) * observed[i][j] for i in range(k) for j in range(k)
        )
        chance = sum(weight(i, j, k) * rows[i] * cols[j] for i in range(k) for j in range(k))
        return 1.0 - disagreement / chance

    return compute


@pytest.fixture
def auc_oracle():
    """Fraction of (positive, negative) pairs ranked correctly, ties counting one half."""

    def compute(scores, truth):
        scores, truth = np.asarray(scores, dtype=float), np.asarray(truth, dtype=bool)
        pos = scores[truth][:, None]
        neg = scores[~truth][None, :]
        wins = (pos > neg).sum() + 0.5 * (pos == neg).sum()
        return wins / (pos.size * neg.size)

    return compute


@pytest.fixture
def noisy_reader():
    """Labels that match the reference with probability ``hit``, else move one step."""

    def make(rng, reference, hit, k):
        reference = np.asarray(reference)
        step = rng.choice([-1, 1], size=reference.shape)
        moved = np.clip(reference + step, 0, k - 1)
        return np.where(rng.random(reference.shape) < hit, reference, moved)

    return make
