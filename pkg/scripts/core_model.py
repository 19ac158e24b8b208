#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
数据集表示与精确 oracle
- ShardVector: 单个 player 持有的 universe id 集合（二值重数）
- Dataset: α 个 shard 组成的分布式数据集，支持文本格式读写
- 精确计算 F0 / F1 / 超额质量 D / 成对碰撞数 C
"""

from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple
from dataclasses import dataclass, field

import numpy as np

# binom(H, 2) 在桌面规模下不会溢出 64 位
MAX_UNIVERSE_SIZE = 1 << 48


class F0Error(Exception):
    """所有领域错误的基类"""


class EmptyDataset(F0Error):
    """数据集为空（F1 = 0）"""


class InvalidDataset(F0Error):
    """数据集违反不变量（id 越界、player 编号错位等）"""


class FormatError(F0Error):
    """数据集文本格式解析失败"""


def _freeze_ids(items) -> np.ndarray:
    if isinstance(items, (set, frozenset)):
        items = sorted(items)
    arr = np.unique(np.asarray(items, dtype=np.int64).ravel())
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ShardVector:
    """单个 player 的本地数据（排序、去重后的只读 id 数组）"""

    player_id: int
    items: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.player_id < 0:
            raise InvalidDataset(f"player_id 不能为负: {self.player_id}")
        # 同一 shard 内的重复 id 折叠为一个
        object.__setattr__(self, "items", _freeze_ids(self.items))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ShardVector):
            return NotImplemented
        return self.player_id == other.player_id and np.array_equal(
            self.items, other.items
        )

    def __hash__(self) -> int:
        return hash((self.player_id, self.items.tobytes()))

    def __len__(self) -> int:
        return int(self.items.size)

    def __contains__(self, item: int) -> bool:
        idx = np.searchsorted(self.items, item)
        return bool(idx < self.items.size and self.items[idx] == item)

    def to_set(self) -> set:
        return set(int(x) for x in self.items)


@dataclass(frozen=True)
class Dataset:
    """分布在 α 个 player 上的数据集"""

    universe_size: int
    shards: Tuple[ShardVector, ...]

    def __post_init__(self):
        n = self.universe_size
        if n < 1 or n > MAX_UNIVERSE_SIZE:
            raise InvalidDataset(f"universe_size 超出范围 [1, 2^48]: {n}")

        shards = tuple(self.shards)
        if not shards:
            raise InvalidDataset("数据集至少需要一个 shard")

        for idx, shard in enumerate(shards):
            if shard.player_id != idx:
                raise InvalidDataset(
                    f"shard {idx} 的 player_id 为 {shard.player_id}，应与位置一致"
                )
            if len(shard) and (shard.items[0] < 0 or shard.items[-1] >= n):
                raise InvalidDataset(f"shard {idx} 含有越界 id (n={n})")

        object.__setattr__(self, "shards", shards)

    @classmethod
    def from_sets(cls, universe_size: int, shard_items: Sequence[Iterable[int]]):
        """由若干 id 集合构建数据集，player 编号按顺序分配"""
        shards = tuple(
            ShardVector(player_id=i, items=np.fromiter(items, dtype=np.int64))
            for i, items in enumerate(shard_items)
        )
        return cls(universe_size=universe_size, shards=shards)

    @property
    def alpha(self) -> int:
        return len(self.shards)

    @property
    def max_shard_size(self) -> int:
        return max(len(s) for s in self.shards)

    def holder_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        返回 (ids, H)，H[k] 为持有 ids[k] 的 player 数

        只包含至少被一个 player 持有的 id
        """
        all_items = np.concatenate([s.items for s in self.shards])
        if all_items.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        ids, counts = np.unique(all_items, return_counts=True)
        return ids, counts.astype(np.int64)

    # --- 文本格式 ---

    def to_text(self) -> str:
        """
        文本格式:
            n=<int> alpha=<int>
            每个 shard 一行，id 升序、空格分隔（空 shard 为空行）
        """
        lines = [f"n={self.universe_size} alpha={self.alpha}"]
        for shard in self.shards:
            lines.append(" ".join(str(int(x)) for x in shard.items))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Dataset":
        if text.endswith("\n"):
            text = text[:-1]
        lines = text.split("\n")

        header = lines[0].split()
        try:
            fields = dict(part.split("=", 1) for part in header)
            n = int(fields["n"])
            alpha = int(fields["alpha"])
        except (ValueError, KeyError) as e:
            raise FormatError(f"第 1 行头部格式错误: {lines[0]!r} ({e})")

        body = lines[1:]
        if len(body) != alpha:
            raise FormatError(f"头部声明 alpha={alpha}，实际有 {len(body)} 行 shard")

        shard_items: List[List[int]] = []
        for line_no, line in enumerate(body, start=2):
            try:
                shard_items.append([int(tok) for tok in line.split()])
            except ValueError:
                raise FormatError(f"第 {line_no} 行含有非整数 id: {line!r}")

        return cls.from_sets(n, shard_items)


def save_dataset(d: Dataset, path: str) -> Path:
    """保存数据集到文本文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(d.to_text())
    return path


def load_dataset(path: str) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"数据集文件不存在: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return Dataset.from_text(f.read())


# --- 精确 oracle ---


@dataclass(frozen=True)
class GroundTruth:
    """一个数据集的精确统计量"""

    f0: int
    f1: int
    excess_mass: int
    pairwise_collisions: int
    multiplicity_histogram: Dict[int, int]

    def check(self) -> None:
        """校验 F0 = F1 - D、C >= D 等恒等式，违反时抛 AssertionError"""
        assert self.f0 == self.f1 - self.excess_mass
        assert self.pairwise_collisions >= self.excess_mass
        assert self.f0 <= self.f1
        hist = self.multiplicity_histogram
        assert sum(h * c for h, c in hist.items()) == self.f1
        assert sum(c for h, c in hist.items() if h >= 1) == self.f0

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.f0, self.f1, self.excess_mass, self.pairwise_collisions)


def f0_exact(d: Dataset) -> int:
    """至少出现在一个 shard 中的 id 个数"""
    ids, _ = d.holder_counts()
    return int(ids.size)


def f1_exact(d: Dataset) -> int:
    return int(sum(len(s) for s in d.shards))


def pairwise_collisions_exact(d: Dataset) -> int:
    """C = Σ_j binom(H_j, 2)"""
    _, h = d.holder_counts()
    return int(np.sum(h * (h - 1) // 2))


def excess_mass_exact(d: Dataset) -> int:
    """D = Σ_j max(0, H_j - 1)"""
    _, h = d.holder_counts()
    return int(np.sum(np.maximum(h - 1, 0)))


def duplicate_count_exact(d: Dataset) -> int:
    """被至少两个 player 持有的 id 个数"""
    _, h = d.holder_counts()
    return int(np.count_nonzero(h >= 2))


def multiplicity_histogram(d: Dataset) -> Dict[int, int]:
    """重数 H → 具有该重数的 id 个数"""
    _, h = d.holder_counts()
    if h.size == 0:
        return {}
    values, counts = np.unique(h, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def ground_truth(d: Dataset) -> GroundTruth:
    gt = GroundTruth(
        f0=f0_exact(d),
        f1=f1_exact(d),
        excess_mass=excess_mass_exact(d),
        pairwise_collisions=pairwise_collisions_exact(d),
        multiplicity_histogram=multiplicity_histogram(d),
    )
    gt.check()
    return gt


def main():
    import argparse

    parser = argparse.ArgumentParser(description="计算数据集的精确统计量")
    parser.add_argument("dataset_file", help="数据集文本文件路径")

    args = parser.parse_args()

    try:
        d = load_dataset(args.dataset_file)
    except (F0Error, OSError) as e:
        print(f"[ERROR] 加载数据集失败: {e}")
        raise SystemExit(1)

    gt = ground_truth(d)
    print(f"[INFO] 数据集: {Path(args.dataset_file).name}")
    print(f"       n={d.universe_size}  alpha={d.alpha}")
    print(f"       F0={gt.f0}  F1={gt.f1}  D={gt.excess_mass}  C={gt.pairwise_collisions}")
    print(f"       重数直方图: {gt.multiplicity_histogram}")


if __name__ == "__main__":
    main()
