#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
公共随机性: 所有 player 共享的确定性子采样
- 嵌套层级 S_0 ⊇ S_1 ⊇ ...，item 以 2^-i 的概率留在第 i 层
- Bernoulli(p) 子集，用 salt 区分不同用途
同一个 (seed, salt, item) 在任何进程、任何 player 上得到同一个 64 位哈希
"""

import math
from typing import Optional, Union
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
TWO_POW_64 = 1 << 64

# splitmix64 finalizer 常量，改动会破坏重放，见 golden test
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_C1 = 0xBF58476D1CE4E5B9
MIX_C2 = 0x94D049BB133111EB

MAX_LEVEL = 64

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3


def salt_from_name(name: Union[str, int]) -> int:
    """把可读标签（如 "dup-positions"）转换为 64 位 salt（FNV-1a）"""
    if isinstance(name, int):
        return name & MASK64
    h = _FNV_OFFSET64
    for b in name.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME64) & MASK64
    return h


def mix64(x: int) -> int:
    """splitmix64 的一步: 状态加 gamma 后做 xor-shift / 乘法雪崩"""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX_C1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_C2) & MASK64
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """mix64 的向量化版本，结果与标量版逐位一致"""
    z = np.asarray(x).astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z += np.uint64(GOLDEN_GAMMA)
        z ^= z >> np.uint64(30)
        z *= np.uint64(MIX_C1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(MIX_C2)
        z ^= z >> np.uint64(31)
    return z


def _key(seed: int, salt: int) -> int:
    return mix64((seed & MASK64) ^ mix64(salt & MASK64))


def hash64(seed: int, salt: int, item: int) -> int:
    return mix64(_key(seed, salt) ^ (int(item) & MASK64))


def hash64_array(seed: int, salt: int, items) -> np.ndarray:
    items = np.asarray(items).astype(np.uint64)
    return mix64_array(np.uint64(_key(seed, salt)) ^ items)


def bit_length_array(h: np.ndarray) -> np.ndarray:
    """uint64 数组逐元素的 bit_length（整数二分，不经过浮点）"""
    v = np.asarray(h, dtype=np.uint64).copy()
    length = np.zeros(v.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        high = (v >> np.uint64(shift)) != 0
        length[high] += shift
        v[high] >>= np.uint64(shift)
    length += (v != 0).astype(np.int64)
    return length


def bernoulli_threshold(p: float) -> int:
    """floor(p · 2^64)；p >= 1 时返回 2^64（全部通过）"""
    if p <= 0:
        return 0
    if p >= 1:
        return TWO_POW_64
    return min(TWO_POW_64, int(math.floor(p * float(TWO_POW_64))))


@dataclass(frozen=True)
class SamplerSeed:
    """一次协议运行内固定、所有 player 相同的种子"""

    seed: int
    salt: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & MASK64)
        object.__setattr__(self, "salt", int(self.salt) & MASK64)


class LevelSampler:
    """
    嵌套层级采样器

    item 在第 level 层 ⇔ hash64(seed, salt, item) < 2^64 / 2^level，
    所有层共用一个哈希值，因此 S_{i+1} ⊆ S_i 恒成立
    """

    def __init__(self, seed: SamplerSeed, universe_size: Optional[int] = None):
        self.seed = seed
        self.universe_size = universe_size

    def derive(self, tag: Union[str, int]) -> "LevelSampler":
        """同一 seed 下派生用途不同的采样器（salt 异或标签）"""
        salt = self.seed.salt ^ salt_from_name(tag)
        return LevelSampler(SamplerSeed(self.seed.seed, salt), self.universe_size)

    def _check_item(self, item: int) -> None:
        if self.universe_size is not None and not 0 <= item < self.universe_size:
            raise ValueError(f"item {item} 超出 universe [0, {self.universe_size})")

    def hash(self, item: int, salt2: int = 0) -> int:
        return hash64(self.seed.seed, self.seed.salt ^ salt2, item)

    def hash_many(self, items, salt2: int = 0) -> np.ndarray:
        return hash64_array(self.seed.seed, self.seed.salt ^ salt2, items)

    # --- 标量接口 ---

    def in_level(self, item: int, level: int) -> bool:
        """level 0 恒为真；level > 64 时概率下溢，恒为假"""
        self._check_item(item)
        if level <= 0:
            return True
        if level > MAX_LEVEL:
            return False
        return self.hash(item) < (TWO_POW_64 >> level)

    def in_bernoulli(self, item: int, p: float, salt2: Union[str, int] = 0) -> bool:
        if not 0 <= p <= 1:
            raise ValueError(f"p 必须在 [0, 1] 内: {p}")
        self._check_item(item)
        threshold = bernoulli_threshold(p)
        if threshold >= TWO_POW_64:
            return True
        return self.hash(item, salt_from_name(salt2)) < threshold

    # --- 向量化接口（协议内部使用） ---

    def max_level(self, items) -> np.ndarray:
        """每个 item 能留存的最高层级 L，即 in_level(item, l) ⇔ l <= L"""
        return MAX_LEVEL - bit_length_array(self.hash_many(items))

    def level_mask(self, items, level: int) -> np.ndarray:
        items = np.asarray(items)
        if level <= 0:
            return np.ones(items.shape, dtype=bool)
        if level > MAX_LEVEL:
            return np.zeros(items.shape, dtype=bool)
        return self.hash_many(items) < np.uint64(TWO_POW_64 >> level)

    def bernoulli_mask(self, items, p: float, salt2: Union[str, int] = 0) -> np.ndarray:
        if not 0 <= p <= 1:
            raise ValueError(f"p 必须在 [0, 1] 内: {p}")
        items = np.asarray(items)
        threshold = bernoulli_threshold(p)
        if threshold >= TWO_POW_64:
            return np.ones(items.shape, dtype=bool)
        if threshold == 0:
            return np.zeros(items.shape, dtype=bool)
        return self.hash_many(items, salt_from_name(salt2)) < np.uint64(threshold)


def main():
    import argparse

    parser = argparse.ArgumentParser(description="查询共享采样器的层级成员关系")
    parser.add_argument("items", nargs="+", type=int, help="universe id")
    parser.add_argument("--seed", type=int, default=0, help="64 位十进制种子")
    parser.add_argument("--salt", type=int, default=0, help="64 位 salt")
    parser.add_argument("--levels", type=int, default=8, help="显示的层数")

    args = parser.parse_args()

    sampler = LevelSampler(SamplerSeed(args.seed, args.salt))
    top = sampler.max_level(np.asarray(args.items, dtype=np.int64))
    for item, level in zip(args.items, top):
        marks = "".join("#" if l <= level else "." for l in range(args.levels + 1))
        print(f"   {item:>12d}  max_level={int(level):2d}  {marks}")


if __name__ == "__main__":
    main()
