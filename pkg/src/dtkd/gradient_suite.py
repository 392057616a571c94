"""Finite-difference checks of every layer and loss on random configurations.

```python
from dtkd.gradient_suite import run_gradient_suite

report = run_gradient_suite(n_configs=100, seed=0)
assert report.passed
report.df()
```
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from dtkd.autodiff import (
    GradcheckResult,
    Tensor,
    bias_add,
    exp,
    gradcheck,
    log,
    log_softmax,
    matmul,
    maxpool2d,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    total,
)
from dtkd.losses import (
    DistillationConfig,
    cross_entropy,
    kd_combined_loss,
    kl_divergence,
    softmax_temperature,
)
from dtkd.nn import Layer, layer_forward
from dtkd.profiling import Timer
from dtkd.randomness import as_rng
from dtkd.types import Seed

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4

Case = tuple[Callable[..., Tensor], list[Tensor]]
CaseBuilder = Callable[[np.random.Generator], Case]


def _leaf(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _away_from_kinks(rng: np.random.Generator, *shape: int) -> Tensor:
    """Distinct values at least 0.01 apart and away from 0."""
    size = int(np.prod(shape))
    values = (rng.permutation(size) - size / 2 + 0.5) * 0.02
    return Tensor(values.reshape(shape), requires_grad=True)


def _params_as_leaves(layer: Layer) -> list[Tensor]:
    for tensor in layer.params.values():
        tensor.requires_grad = True
    return list(layer.params.values())


def _with_params(
    layer: Layer,
    names: Sequence[str],
    f: Callable[[Tensor], Tensor],
) -> Callable[..., Tensor]:
    def call(x: Tensor, *params: Tensor) -> Tensor:
        original = dict(layer.params)
        layer.params.update(dict(zip(names, params, strict=True)))
        try:
            return f(x)
        finally:
            layer.params.update(original)

    return call


def _layer_case(layer: Layer, x: Tensor, rng: np.random.Generator) -> Case:
    sample = layer_forward(layer, x, mode="eval")
    weights = Tensor(rng.standard_normal(sample.shape))

    def forward(x: Tensor) -> Tensor:
        out = layer_forward(layer, x)
        return total(mul(out, weights))

    names = list(layer.params)
    return _with_params(layer, names, forward), [x, *_params_as_leaves(layer)]


def conv2d_case(rng: np.random.Generator) -> Case:
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2))
    k = int(rng.choice([1, 3]))
    c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    side = int(rng.integers(k, 7))
    layer = Layer.conv2d(c_in, c_out, k, stride=stride, padding=padding, rng=rng)
    return _layer_case(layer, _leaf(rng, 2, c_in, side, side), rng)


def linear_case(rng: np.random.Generator) -> Case:
    n_in, n_out = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    layer = Layer.linear(n_in, n_out, rng=rng)
    return _layer_case(layer, _leaf(rng, 3, n_in), rng)


def relu_case(rng: np.random.Generator) -> Case:
    return _simple(relu, _away_from_kinks(rng, 2, 3, 4), rng)


def _simple(
    op: Callable[[Tensor], Tensor],
    x: Tensor,
    rng: np.random.Generator,
) -> Case:
    weights = Tensor(rng.standard_normal(op(x).shape))
    return (lambda x: total(mul(op(x), weights))), [x]


def maxpool_case(rng: np.random.Generator) -> Case:
    window = int(rng.integers(1, 4))
    side = window * int(rng.integers(1, 4))
    x = _away_from_kinks(rng, 2, 2, side, side)
    return _simple(lambda t: maxpool2d(t, window), x, rng)


def flatten_case(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 2, 3, 2, 2)
    return _simple(lambda t: reshape(t, (t.shape[0], -1)), x, rng)


def dropout_case(rng: np.random.Generator) -> Case:
    p = float(rng.uniform(0.1, 0.6))
    layer = Layer.dropout(p)
    mask_seed = int(rng.integers(2**31))
    x = _leaf(rng, 4, 5)
    weights = Tensor(rng.standard_normal(x.shape))

    def forward(x: Tensor) -> Tensor:
        mask_rng = np.random.default_rng(mask_seed)
        out = layer_forward(layer, x, mode="train", rng=mask_rng)
        return total(mul(out, weights))

    return forward, [x]


def residual_block_case(rng: np.random.Generator) -> Case:
    channels = int(rng.integers(1, 4))
    inner = [
        Layer.conv2d(channels, channels, 3, padding=1, rng=rng),
        Layer.conv2d(channels, channels, 1, rng=rng),
    ]
    block = Layer.residual_block(inner)
    x = _leaf(rng, 2, channels, 4, 4)
    leaves = [t for layer in inner for t in _params_as_leaves(layer)]
    weights = Tensor(rng.standard_normal(x.shape))

    def forward(x: Tensor, *params: Tensor) -> Tensor:
        originals = [dict(layer.params) for layer in inner]
        it = iter(params)
        for layer in inner:
            layer.params.update({name: next(it) for name in layer.params})
        try:
            return total(mul(layer_forward(block, x), weights))
        finally:
            for layer, original in zip(inner, originals, strict=True):
                layer.params.update(original)

    return forward, [x, *leaves]


def bias_add_case(rng: np.random.Generator) -> Case:
    x, b = _leaf(rng, 2, 3, 2, 2), _leaf(rng, 3)
    weights = Tensor(rng.standard_normal(x.shape))
    return (lambda x, b: total(mul(bias_add(x, b), weights))), [x, b]


def matmul_case(rng: np.random.Generator) -> Case:
    n, k, m = (int(v) for v in rng.integers(1, 5, size=3))
    a, b = _leaf(rng, n, k), _leaf(rng, k, m)
    weights = Tensor(rng.standard_normal((n, m)))
    return (lambda a, b: total(mul(matmul(a, b), weights))), [a, b]


def exp_log_case(rng: np.random.Generator) -> Case:
    x = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    return _simple(lambda t: log(mul(exp(t), t)), x, rng)


def mean_case(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 3, 4)
    return (lambda x: mean(mul(x, x))), [x]


def softmax_case(rng: np.random.Generator) -> Case:
    t = float(rng.uniform(0.5, 10.0))
    z = _leaf(rng, 3, 5, scale=2.0)
    return _simple(lambda z: softmax(z, t), z, rng)


def log_softmax_case(rng: np.random.Generator) -> Case:
    t = float(rng.uniform(0.5, 10.0))
    z = _leaf(rng, 3, 5, scale=2.0)
    return _simple(lambda z: log_softmax(z, t), z, rng)


def cross_entropy_case(rng: np.random.Generator) -> Case:
    n, k = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    labels = rng.integers(0, k, size=n)
    z = _leaf(rng, n, k, scale=2.0)
    return (lambda z: cross_entropy(z, labels)), [z]


def kl_divergence_case(rng: np.random.Generator) -> Case:
    n, k = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    p_teacher = softmax(Tensor(rng.standard_normal((n, k)))).data
    z = _leaf(rng, n, k)
    return (lambda z: kl_divergence(softmax(z), p_teacher)), [z]


def kd_loss_case(rng: np.random.Generator) -> Case:
    n, k = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    cfg = DistillationConfig(
        temperature=float(rng.uniform(1.0, 10.0)),
        alpha=float(rng.uniform(0.0, 1.0)),
    )
    labels = rng.integers(0, k, size=n)
    z_t = Tensor(2 * rng.standard_normal((n, k)))
    z_s = _leaf(rng, n, k, scale=2.0)
    return (lambda z: kd_combined_loss(z, z_t, labels, cfg)), [z_s]


def temperature_softmax_case(rng: np.random.Generator) -> Case:
    t = float(rng.uniform(1.0, 10.0))
    z = _leaf(rng, 2, 4)
    return _simple(lambda z: softmax_temperature(z, t), z, rng)


CASES: dict[str, CaseBuilder] = {
    "conv2d": conv2d_case,
    "linear": linear_case,
    "relu": relu_case,
    "maxpool2d": maxpool_case,
    "flatten": flatten_case,
    "dropout": dropout_case,
    "residual_block": residual_block_case,
    "bias_add": bias_add_case,
    "matmul": matmul_case,
    "exp_log": exp_log_case,
    "mean": mean_case,
    "softmax": softmax_case,
    "log_softmax": log_softmax_case,
    "softmax_temperature": temperature_softmax_case,
    "cross_entropy": cross_entropy_case,
    "kl_divergence": kl_divergence_case,
    "kd_combined_loss": kd_loss_case,
}
"""Every layer and loss checked by the suite, by name."""


@dataclass
class GradientSuiteReport:
    """Results of a gradient suite run.

    Attributes:
        results: One result per configuration.
        tolerance: The relative error a configuration must stay below.
        runtime: Wall time in seconds.
    """

    results: list[GradcheckResult] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE
    runtime: float = 0.0

    @property
    def max_rel_error(self) -> float:
        """The largest relative error over every configuration."""
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def passed(self) -> bool:
        """Whether every configuration is within tolerance."""
        return all(r.passed(self.tolerance) for r in self.results)

    def df(self) -> pd.DataFrame:
        """Maximum relative error per configuration."""
        return pd.DataFrame(
            {
                "case": [r.name for r in self.results],
                "max_rel_error": [r.max_rel_error for r in self.results],
                "passed": [r.passed(self.tolerance) for r in self.results],
            },
        )

    def to_dict(self) -> dict[str, Any]:
        """Worst error per case, without timing."""
        worst = self.df().groupby("case", sort=True)["max_rel_error"].max()
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "n_configs": len(self.results),
            "max_rel_error": self.max_rel_error,
            "cases": {name: float(err) for name, err in worst.items()},
        }


def run_gradient_suite(
    n_configs: int = 100,
    *,
    seed: Seed | None = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    cases: Sequence[str] | None = None,
) -> GradientSuiteReport:
    """Check random configurations of every case, cycling through the cases.

    Args:
        n_configs: Total number of configurations.
        seed: Seed of the configurations.
        tolerance: Maximum relative error of a passing configuration.
        cases: Restrict to these case names.
    """
    names = list(CASES) if cases is None else list(cases)
    unknown = set(names) - set(CASES)
    if unknown:
        raise ValueError(
            f"Unknown gradient cases {sorted(unknown)}, choose from {list(CASES)}",
        )

    rng = as_rng(seed)
    report = GradientSuiteReport(tolerance=tolerance)
    with Timer.time() as interval:
        for i in range(n_configs):
            name = names[i % len(names)]
            f, inputs = CASES[name](rng)
            report.results.append(gradcheck(f, inputs, name=name))

    report.runtime = interval.duration
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(
        level,
        f"Gradient suite: {n_configs} configurations, max relative error"
        f" {report.max_rel_error:.3e} in {report.runtime:.1f}s",
    )
    return report
