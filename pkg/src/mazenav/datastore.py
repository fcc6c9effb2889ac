"""Instance serialization (JSONL), stratified splitting, and vocabulary."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .langgen import Instance, TaskCategory
from .worldsim import Action, Direction, Pose, world_from_dict, world_to_dict

UNK = "<unk>"
UNK_INDEX = 0


class DatasetError(ValueError):
    """Malformed dataset file; message names the offending line."""


def instance_to_dict(inst: Instance) -> dict:
    """JSON-ready form with stable key order (reproducible byte output)."""
    return {
        "id": inst.id,
        "seed": inst.seed,
        "category": inst.category.value,
        "start": {"x": inst.start.x, "y": inst.start.y, "dir": inst.start.dir.name},
        "instruction": list(inst.instruction),
        "actions": [a.value for a in inst.actions],
        "map": world_to_dict(inst.world),
    }


def instance_from_dict(data: dict) -> Instance:
    start = data["start"]
    return Instance(
        id=data["id"],
        seed=data["seed"],
        category=TaskCategory(data["category"]),
        world=world_from_dict(data["map"]),
        start=Pose(start["x"], start["y"], Direction[start["dir"]]),
        instruction=list(data["instruction"]),
        actions=[Action(a) for a in data["actions"]],
    )


def write_instances(instances: Iterable[Instance], path: str) -> int:
    """Write one compact JSON object per line; returns the line count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def read_instances(path: str) -> Iterator[Instance]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                yield instance_from_dict(data)
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc


@dataclass
class DatasetSplit:
    train: list[int]
    dev: list[int]
    test: list[int]
    by_category: dict[str, tuple[int, int, int]]

    def to_dict(self) -> dict:
        return {
            "train": self.train,
            "dev": self.dev,
            "test": self.test,
            "byCategory": {k: list(v) for k, v in self.by_category.items()},
        }


def _largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    """Integer allocation matching `total` exactly; counts differ from the
    real-valued quotas by less than 1."""
    floors = [int(q) for q in quotas]
    residue = total - sum(floors)
    order = sorted(range(len(quotas)), key=lambda i: (quotas[i] - floors[i], -i),
                   reverse=True)
    for i in order[:residue]:
        floors[i] += 1
    return floors


def split_dataset(instances: Sequence[Instance],
                  fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
                  seed: int = 0) -> DatasetSplit:
    """Stratified train/dev/test split of instance ids.

    Global split sizes are fixed first (largest remainder over fractions,
    so train takes no more than its exact share and 105000 yields
    73500/15750/15750), then dev and test quotas are distributed over the
    categories in proportion to category size, again by largest remainder:
    every category's dev and test counts are within one instance of the
    ideal fraction. Instances are shuffled within category by `seed`.
    """
    if not instances:
        raise ValueError("cannot split an empty dataset")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(instances)
    _, n_dev, n_test = _largest_remainder([n * f for f in fractions], n)

    groups: dict[str, list[int]] = {}
    for inst in instances:
        groups.setdefault(inst.category.value, []).append(inst.id)
    cats = sorted(groups)
    sizes = [len(groups[c]) for c in cats]
    dev_counts = _largest_remainder([s * n_dev / n for s in sizes], n_dev)
    test_counts = _largest_remainder([s * n_test / n for s in sizes], n_test)

    rng = random.Random(seed)
    train: list[int] = []
    dev: list[int] = []
    test: list[int] = []
    by_category: dict[str, tuple[int, int, int]] = {}
    for cat, n_d, n_t in zip(cats, dev_counts, test_counts):
        ids = groups[cat][:]
        rng.shuffle(ids)
        dev.extend(ids[:n_d])
        test.extend(ids[n_d:n_d + n_t])
        train.extend(ids[n_d + n_t:])
        by_category[cat] = (len(ids) - n_d - n_t, n_d, n_t)
    return DatasetSplit(sorted(train), sorted(dev), sorted(test), by_category)


class Vocabulary:
    """Token/index bijection with index 0 reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = [UNK] + [t for t in tokens if t != UNK]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Sequence[str]) -> list[int]:
        return [self.index.get(w, UNK_INDEX) for w in words]

    def decode(self, indices: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in indices]

    def to_list(self) -> list[str]:
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        if not tokens or tokens[0] != UNK:
            raise ValueError("vocabulary list must start with the UNK token")
        return cls(tokens[1:])


def build_vocab(instances: Iterable[Instance]) -> Vocabulary:
    """First-occurrence ordering over instruction tokens; UNK is index 0."""
    seen: dict[str, None] = {}
    empty = True
    for inst in instances:
        empty = False
        for tok in inst.instruction:
            seen.setdefault(tok, None)
    if empty:
        raise ValueError("cannot build a vocabulary from an empty stream")
    return Vocabulary(list(seen))
