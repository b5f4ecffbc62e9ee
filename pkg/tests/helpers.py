"""Random models and instances shared by the explainer and acceptance tests."""

import numpy as np

from isdl.classifier import MLPClassifier


def random_mlp(rng, n_features, n_classes=3, hidden=None):
    hidden = int(rng.integers(0, 6)) if hidden is None else hidden
    model = MLPClassifier(n_classes, n_features, hidden)
    model.params = rng.normal(scale=1.5, size=model.n_params)
    return model


def random_triple(rng, max_features=10):
    """(scalar model, instance, background) with 1..max_features features."""
    F = int(rng.integers(1, max_features + 1))
    model = random_mlp(rng, F)
    cls = int(rng.integers(0, model.n_classes))
    x = rng.normal(size=F)
    background = rng.normal(size=(int(rng.integers(1, 4)), F))
    return (lambda rows: model.predict_proba(rows)[:, cls]), x, background


def random_polynomial(rng, F, n_terms=4):
    """Sum of random monomials of degree <= 3 over the first F inputs."""
    terms = [(rng.normal(), rng.choice(F, size=int(rng.integers(1, min(3, F) + 1)), replace=False))
             for _ in range(n_terms)]

    def f(rows):
        rows = np.atleast_2d(rows)
        return sum(c * np.prod(rows[:, idx], axis=1) for c, idx in terms)

    return f
