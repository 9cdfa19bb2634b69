"""Named RNG sub-streams derived from one root seed.

Every consumer of randomness in a training run pulls from its own named
stream, so toggling a component on or off never shifts the draws seen by the
others. That is what makes ablation variants paired: same seed => same data
order and same augmentation noise, whatever else changed.
"""

import numpy as np

STREAM_NAMES = (
    "data",          # minibatch index draws
    "init",          # parameter init
    "augment_weak",  # weak-view noise, labeled then unlabeled, every iteration
    "augment_strong",  # strong-view dropout + noise, two views per iteration
    "mask_cls",      # rebalancing mask draws for the labeled loss
    "mask_con",      # rebalancing mask draws for the consistency loss
)


class SeedStreams:
    def __init__(self, seed):
        root = np.random.SeedSequence(seed)
        children = root.spawn(len(STREAM_NAMES))
        self._gens = {
            name: np.random.default_rng(child)
            for name, child in zip(STREAM_NAMES, children)
        }
        self.seed = seed

    def get(self, name):
        try:
            return self._gens[name]
        except KeyError:
            raise KeyError(f"unknown rng stream {name!r}; known: {STREAM_NAMES}") from None
