"""Python bindings for the dualadapt simulator."""

import json

from . import _core
from ._core import (
    client_flops,
    communication,
    cross_entropy,
    discrepancy,
    methods,
    mixup_pair,
    softmax,
)

__all__ = [
    "client_flops",
    "communication",
    "confidence_weights",
    "cost_table",
    "cross_entropy",
    "default_benchmark",
    "discrepancy",
    "fit_gmm",
    "generate",
    "log_density",
    "methods",
    "mixup_pair",
    "run",
    "softmax",
]


def _dump(obj):
    if obj is None:
        return ""
    return obj if isinstance(obj, str) else json.dumps(obj)


def run(method, train=None, benchmark=None, seed=0):
    """Train one method on a generated benchmark and return the report as a dict."""
    return json.loads(_core.run(method, _dump(train), _dump(benchmark), seed))


def generate(benchmark=None):
    """Generate a benchmark; returns source and per-target arrays."""
    return _core.generate(_dump(benchmark))


def default_benchmark(seed=0):
    return json.loads(_core.default_benchmark(seed))


def fit_gmm(z, num_classes, seed=0, min_energy=0.8):
    return json.loads(_core.fit_gmm(z, num_classes, seed, min_energy))


def log_density(gmm, z):
    return _core.log_density(_dump(gmm), z)


def confidence_weights(gmm, z):
    return _core.confidence_weights(_dump(gmm), z)


def cost_table(arch):
    return _core.cost_table(_dump(arch))
