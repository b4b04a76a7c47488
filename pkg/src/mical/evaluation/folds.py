from dataclasses import dataclass

import numpy as np

__all__ = ["FoldPlan", "make_folds"]


@dataclass(frozen=True)
class FoldPlan:
    patients: tuple
    groups: tuple  # one tuple of held-out patient ids per fold

    def __len__(self):
        return len(self.groups)

    def split(self, fold):
        test = self.groups[fold]
        train = tuple(p for p in self.patients if p not in test)
        return train, test


def make_folds(patients, k=6, holdout=4, seed=0):
    """Seeded leave-``holdout``-patients-out plan with ``k`` disjoint test groups."""
    patients = tuple(patients)
    if len(set(patients)) != len(patients):
        raise ValueError("duplicate patient ids")
    if k < 1 or holdout < 1 or len(patients) != k * holdout:
        raise ValueError(f"{len(patients)} patients cannot form {k} folds of {holdout}")
    order = np.random.default_rng(seed).permutation(len(patients))
    shuffled = [patients[i] for i in order]
    groups = tuple(tuple(shuffled[f * holdout:(f + 1) * holdout]) for f in range(k))
    return FoldPlan(patients, groups)
