"""Shared sampling helpers."""

import numpy as np

REGIMES = (-2.0, -0.5, 0.0, 0.3, 1.0)


def bundle_samples(c: float, n: int, seed: int = 0) -> np.ndarray:
    from kepler_euler.chart_geometry import sample_regime_base
    r = np.random.default_rng(seed)
    return np.c_[sample_regime_base(c, n, r), r.uniform(0.0, 2.0 * np.pi, n)]
