"""Corruption operators for denoising training.

All three operators act on the interior of a linearized sequence and leave
the begin/end markers untouched. Composition order inside `apply_noise` is
fixed: shuffle, then dropout, then mask. Every random draw comes from the
generator handed in, so a caller that seeds its stream gets reproducible
corruption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import BOS_TOKEN, EOS_TOKEN, MASK_TOKEN, SPECIAL_TOKENS, LinearSequence


@dataclass(frozen=True)
class NoiseConfig:
    """Corruption strengths; probabilities are per token, shuffle is per sequence."""

    p_drop: float = 0.1
    p_mask: float = 0.1
    p_shuffle: float = 0.5
    shuffle_window: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("p_drop", "p_mask", "p_shuffle"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.shuffle_window < 0:
            raise ValueError(f"shuffle_window must be >= 0, got {self.shuffle_window}")


def _split(x: LinearSequence):
    tokens = x.tokens
    if len(tokens) < 2 or tokens[0] != BOS_TOKEN or tokens[-1] != EOS_TOKEN:
        raise ValueError("noise operators expect a marker-delimited sequence")
    return list(tokens[1:-1])


def _join(interior) -> LinearSequence:
    return LinearSequence((BOS_TOKEN, *interior, EOS_TOKEN))


def noise_shuffle(x: LinearSequence, cfg: NoiseConfig, rng: np.random.Generator) -> LinearSequence:
    """Permute the interior tokens.

    With shuffle_window == 0 the permutation is unrestricted. Otherwise each
    token is displaced at most shuffle_window positions: tokens are reordered
    by the keys position + uniform(0, window + 1), which cannot move anything
    further than the window.
    """
    interior = _split(x)
    n = len(interior)
    if n <= 1:
        return _join(interior)
    if cfg.shuffle_window == 0:
        order = rng.permutation(n)
    else:
        keys = np.arange(n) + rng.uniform(0.0, cfg.shuffle_window + 1.0, size=n)
        order = np.argsort(keys, kind="stable")
    return _join([interior[i] for i in order])


def noise_dropout(x: LinearSequence, cfg: NoiseConfig, rng: np.random.Generator) -> LinearSequence:
    """Delete each interior non-special token independently with p_drop.

    If the deletions would empty the interior, one token (chosen uniformly)
    survives, so the sequence never collapses to bare markers.
    """
    interior = _split(x)
    droppable = [i for i, token in enumerate(interior) if token not in SPECIAL_TOKENS]
    drops = set()
    if droppable:
        coins = rng.random(len(droppable))
        drops = {i for i, coin in zip(droppable, coins) if coin < cfg.p_drop}
        if len(drops) == len(interior):
            survivor = droppable[int(rng.integers(len(droppable)))]
            drops.discard(survivor)
    return _join([token for i, token in enumerate(interior) if i not in drops])


def noise_mask(x: LinearSequence, cfg: NoiseConfig, rng: np.random.Generator) -> LinearSequence:
    """Replace each interior token independently with the mask symbol with p_mask."""
    interior = _split(x)
    if interior:
        coins = rng.random(len(interior))
        interior = [
            MASK_TOKEN if coin < cfg.p_mask else token
            for token, coin in zip(interior, coins)
        ]
    return _join(interior)


def apply_noise(x: LinearSequence, cfg: NoiseConfig, rng: np.random.Generator) -> LinearSequence:
    """Shuffle (with probability p_shuffle), then drop, then mask."""
    if rng.random() < cfg.p_shuffle:
        x = noise_shuffle(x, cfg, rng)
    x = noise_dropout(x, cfg, rng)
    return noise_mask(x, cfg, rng)
