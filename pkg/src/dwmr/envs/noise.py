from __future__ import annotations

import numpy as np


def noise_scale(std: float = 0.5, mode: str = "std") -> float:
    """Standard deviation for a N(0, s) noise spec, where ``s`` is a std or a variance."""
    if mode == "std":
        return float(std)
    if mode == "variance":
        return float(np.sqrt(std))
    raise ValueError(f"noise mode must be 'std' or 'variance', got {mode!r}")


def add_noise(image: np.ndarray, rng: np.random.Generator, std: float = 0.5,
              mode: str = "std") -> np.ndarray:
    """Add i.i.d. Gaussian pixel noise, then clip to [0, 1]."""
    sigma = noise_scale(std, mode)
    return np.clip(image + rng.normal(0.0, sigma, size=image.shape), 0.0, 1.0)
