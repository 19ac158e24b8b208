#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验负载
- Zipf 数据集 / 数据流（rank i 的重数约为 C_z / i^s）
- planted 数据集（精确指定 F0 与碰撞数）
- 边列表 CSV（sender,receiver）读取，按 receiver 划分 player
- log-log 最小二乘拟合 Zipf 参数
"""

import csv
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass

import numpy as np

from core_model import Dataset, F0Error, ShardVector


class InvalidSpec(F0Error):
    """负载参数不合法"""


class ParseError(F0Error):
    """边列表文件格式错误"""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"第 {line_no} 行: {message}")
        self.line_no = line_no


class EmptyFile(F0Error):
    """边列表文件没有任何记录"""


class DegenerateInput(F0Error):
    """无法拟合的直方图"""


@dataclass(frozen=True)
class ZipfSpec:
    """rank i 的目标重数为 C_z / i^s"""

    exponent: float
    scale: float
    support_size: int
    seed: int = 0

    def __post_init__(self):
        if self.exponent <= 0 or self.scale <= 0:
            raise InvalidSpec(f"Zipf 参数必须为正: s={self.exponent}, C_z={self.scale}")
        if self.support_size < 1:
            raise InvalidSpec(f"support_size 必须 >= 1: {self.support_size}")

    def target(self) -> np.ndarray:
        ranks = np.arange(1, self.support_size + 1, dtype=float)
        return self.scale / ranks ** self.exponent


@dataclass(frozen=True)
class PlantedSpec:
    """collisions_target 个 id 各放在 2 个 player 上，其余 id 各放 1 个"""

    f0_target: int
    collisions_target: int
    alpha: int
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 1:
            raise InvalidSpec(f"alpha 必须 >= 1: {self.alpha}")
        if not 0 <= self.collisions_target <= self.f0_target:
            raise InvalidSpec(
                f"需要 0 <= C <= F0: C={self.collisions_target}, F0={self.f0_target}"
            )
        if self.collisions_target > 0 and self.alpha < 2:
            raise InvalidSpec("planted 碰撞至少需要 2 个 player")


@dataclass(frozen=True)
class EdgeRecord:
    sender: str
    receiver: str


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def _pick_ids(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    if k > n:
        raise InvalidSpec(f"需要 {k} 个不同 id，但 universe 只有 {n}")
    return np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)


def _spread(
    rng: np.random.Generator, ids: np.ndarray, copies: np.ndarray, alpha: int
) -> List[np.ndarray]:
    """
    把 ids[k] 放到 copies[k] 个不同的随机 player 上

    每个 id 对 player 打一组随机 key，排名靠前的 copies[k] 个 player 持有它
    """
    if ids.size == 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(alpha)]
    keys = rng.random((ids.size, alpha))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    held = ranks < copies[:, None]
    return [ids[held[:, p]] for p in range(alpha)]


def _build(n: int, shard_items: Sequence[np.ndarray]) -> Dataset:
    shards = tuple(ShardVector(player_id=p, items=items) for p, items in enumerate(shard_items))
    return Dataset(universe_size=n, shards=shards)


def gen_zipfian_dataset(z: ZipfSpec, alpha: int, universe_size: Optional[int] = None) -> Dataset:
    """rank i 的 id 复制到 round(C_z/i^s) 个不同 player 上（截断到 [1, alpha]）"""
    if alpha < 1:
        raise InvalidSpec(f"alpha 必须 >= 1: {alpha}")
    n = universe_size or z.support_size
    if z.support_size > n:
        raise InvalidSpec(f"support_size {z.support_size} 超过 universe {n}")

    rng = np.random.default_rng(z.seed)
    ids = _pick_ids(rng, n, z.support_size) if n > z.support_size else np.arange(n, dtype=np.int64)
    # rank 与 id 的对应关系随机
    ids = rng.permutation(ids)
    copies = np.clip(round_half_up(z.target()), 1, alpha)
    return _build(n, _spread(rng, ids, copies, alpha))


def gen_planted(p: PlantedSpec, n: int) -> Dataset:
    if n < p.f0_target:
        raise InvalidSpec(f"universe {n} 小于 f0_target {p.f0_target}")
    rng = np.random.default_rng(p.seed)
    ids = rng.permutation(_pick_ids(rng, n, p.f0_target))
    copies = np.ones(p.f0_target, dtype=np.int64)
    copies[: p.collisions_target] = 2
    return _build(n, _spread(rng, ids, copies, p.alpha))


def collision_split(beta: float) -> Tuple[int, float]:
    """
    每个 id 复制 k 或 k+1 份，使平均 binom(copies, 2) = beta

    返回 (k, k+1 份所占比例)
    """
    if beta < 0:
        raise InvalidSpec(f"beta 不能为负: {beta}")
    k = 1
    while (k + 1) * k / 2 <= beta:
        k += 1
    base = k * (k - 1) / 2
    return k, (beta - base) / k


def gen_collision_scaled(f0: int, beta: float, alpha: int, n: int, seed: int = 0) -> Dataset:
    """C ≈ beta · F0 的 planted 数据集"""
    k, frac = collision_split(beta)
    top = k + 1 if frac > 0 else k
    if top > alpha:
        raise InvalidSpec(f"beta={beta} 需要每个 id 复制 {top} 份，超过 alpha={alpha}")
    rng = np.random.default_rng(seed)
    ids = rng.permutation(_pick_ids(rng, n, f0))
    copies = np.full(f0, k, dtype=np.int64)
    copies[: int(round_half_up(frac * f0))] = k + 1
    return _build(n, _spread(rng, ids, copies, alpha))


def dataset_to_stream(d: Dataset, seed: int = 0) -> np.ndarray:
    """每个 (player, id) 关联一条更新，顺序确定性打乱；id j 的频率为 H_j"""
    parts = [s.items for s in d.shards]
    stream = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return np.random.default_rng(seed).permutation(stream)


def gen_zipfian_stream(z: ZipfSpec, universe_size: Optional[int] = None) -> np.ndarray:
    """rank i 的 id 出现 max(1, round(C_z/i^s)) 次"""
    n = universe_size or z.support_size
    if z.support_size > n:
        raise InvalidSpec(f"support_size {z.support_size} 超过 universe {n}")
    rng = np.random.default_rng(z.seed)
    ids = rng.permutation(_pick_ids(rng, n, z.support_size))
    freq = np.maximum(1, round_half_up(z.target()))
    return rng.permutation(np.repeat(ids, freq))


def gen_planted_stream(
    f0: int, heavy: int, frequency: int, universe_size: int, seed: int = 0
) -> np.ndarray:
    """heavy 个 id 各出现 frequency 次，其余 f0 - heavy 个 id 各出现一次"""
    if not 0 <= heavy <= f0:
        raise InvalidSpec(f"需要 0 <= heavy <= f0: heavy={heavy}, f0={f0}")
    if frequency < 1:
        raise InvalidSpec(f"frequency 必须 >= 1: {frequency}")
    rng = np.random.default_rng(seed)
    ids = rng.permutation(_pick_ids(rng, universe_size, f0))
    freq = np.ones(f0, dtype=np.int64)
    freq[:heavy] = frequency
    return rng.permutation(np.repeat(ids, freq))


# --- 边列表 ---


def _is_header(row: List[str]) -> bool:
    return bool(row) and not any(ch.isdigit() for ch in row[0])


def load_edges(path: str) -> List[EdgeRecord]:
    """
    读取两列 CSV（sender,receiver）

    首行第一列不含数字时视为表头；空行忽略
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"边列表文件不存在: {path}")

    edges: List[EdgeRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if line_no == 1 and _is_header(row):
                continue
            if len(row) != 2:
                raise ParseError(f"需要 2 列，实际 {len(row)} 列", line_no)
            sender, receiver = row[0].strip(), row[1].strip()
            if not sender or not receiver:
                raise ParseError("sender / receiver 不能为空", line_no)
            edges.append(EdgeRecord(sender, receiver))

    if not edges:
        raise EmptyFile(f"边列表文件没有记录: {path}")
    return edges


def intern_edges(edges: Sequence[EdgeRecord]) -> Tuple[Dict[str, int], Dict[str, int]]:
    """sender → universe id，receiver → player id，均按首次出现顺序编号"""
    senders: Dict[str, int] = {}
    receivers: Dict[str, int] = {}
    for e in edges:
        senders.setdefault(e.sender, len(senders))
        receivers.setdefault(e.receiver, len(receivers))
    return senders, receivers


def partition_by_receiver(edges: Sequence[EdgeRecord]) -> Dataset:
    """每个 receiver 一个 shard，shard 内是与它交互过的 sender（重复边折叠）"""
    if not edges:
        raise EmptyFile("没有可划分的边")
    senders, receivers = intern_edges(edges)
    shard_items: List[set] = [set() for _ in receivers]
    for e in edges:
        shard_items[receivers[e.receiver]].add(senders[e.sender])
    return Dataset.from_sets(max(1, len(senders)), shard_items)


# --- Zipf 拟合 ---


def fit_zipf(histogram) -> Tuple[float, float]:
    """
    在 (log i, log x_i) 上做无权最小二乘

    Returns:
        (s, C_z)，其中 s = -slope，C_z = exp(intercept)
    """
    x = np.asarray(histogram, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateInput(f"拟合至少需要 2 个计数，实际 {x.size}")
    if np.any(x <= 0):
        raise DegenerateInput("直方图含有非正计数")
    ranks = np.arange(1, x.size + 1, dtype=float)
    slope, intercept = np.polyfit(np.log(ranks), np.log(x), 1)
    s = -float(slope)
    if abs(s) < 1e-12:
        s = 0.0
    return s, float(math.exp(intercept))


def write_histogram_csv(counts, path: str, comment: Optional[str] = None) -> Path:
    """rank,count 格式；counts 按降序写出"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted((int(c) for c in counts), reverse=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["rank", "count"])
        for rank, count in enumerate(ordered, start=1):
            writer.writerow([rank, count])
    return path


def main():
    import argparse

    from core_model import ground_truth, save_dataset
    from streaming import save_stream

    parser = argparse.ArgumentParser(description="生成实验负载")
    parser.add_argument("kind", choices=["zipf", "planted", "zipf-stream", "planted-stream"])
    parser.add_argument("output", help="输出文件路径")
    parser.add_argument("--n", type=int, default=10 ** 6, help="universe 大小")
    parser.add_argument("--alpha", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--zipf-s", type=float, default=1.5)
    parser.add_argument("--zipf-scale", type=float, default=16.0)
    parser.add_argument("--support", type=int, default=10 ** 4)
    parser.add_argument("--f0", type=int, default=10 ** 4)
    parser.add_argument("--collisions", type=int, default=0, help="planted 碰撞数 / heavy id 数")
    parser.add_argument("--frequency", type=int, default=2, help="planted-stream 中 heavy id 的频率")

    args = parser.parse_args()

    try:
        if args.kind in ("zipf", "zipf-stream"):
            spec = ZipfSpec(args.zipf_s, args.zipf_scale, args.support, args.seed)
            if args.kind == "zipf":
                d = gen_zipfian_dataset(spec, args.alpha, args.n)
            else:
                stream = gen_zipfian_stream(spec, args.n)
        elif args.kind == "planted":
            d = gen_planted(PlantedSpec(args.f0, args.collisions, args.alpha, args.seed), args.n)
        else:
            stream = gen_planted_stream(args.f0, args.collisions, args.frequency, args.n, args.seed)
    except F0Error as e:
        print(f"[ERROR] {e}")
        raise SystemExit(1)

    if args.kind in ("zipf", "planted"):
        save_dataset(d, args.output)
        gt = ground_truth(d)
        print(f"[OK] 数据集已保存: {args.output}")
        print(f"     F0={gt.f0}  F1={gt.f1}  D={gt.excess_mass}  C={gt.pairwise_collisions}")
    else:
        save_stream(stream, args.output)
        print(f"[OK] 数据流已保存: {args.output} ({stream.size} 条更新)")


if __name__ == "__main__":
    main()
