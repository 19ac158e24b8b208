#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
insertion-only 数据流上的 F0 估计
- CountSketch（b 列 × r 行，带符号哈希）
- 单遍: 子采样 + 分桶 + 截尾均值（robust mean）
- 两遍: 分层 CountSketch 找 heavy hitter，第二遍精确计数后扣除超额质量
"""

import math
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
from dataclasses import dataclass, field

import numpy as np

from core_model import F0Error
from shared_sampling import (
    LevelSampler,
    SamplerSeed,
    hash64_array,
    mix64,
    salt_from_name,
)

COUNTER_BITS = 64


@dataclass(frozen=True)
class StreamUpdate:
    """insertion-only 更新（+1）"""

    item: int

    def __post_init__(self):
        if self.item < 0:
            raise ValueError(f"item 不能为负: {self.item}")


class EmptyInput(F0Error):
    """robust mean 没有样本"""


class InvalidHint(F0Error):
    """单遍算法的 X 提示不合法"""


class PassMismatch(F0Error):
    """两遍读到的更新总数不一致"""


def as_stream(stream) -> np.ndarray:
    """把任意 id 序列转换为 int64 数组"""
    if isinstance(stream, np.ndarray):
        return stream.astype(np.int64, copy=False).ravel()
    return np.fromiter(stream, dtype=np.int64)


def stream_frequencies(stream) -> Tuple[np.ndarray, np.ndarray]:
    """精确频率 oracle: 返回 (ids, f)"""
    ids, counts = np.unique(as_stream(stream), return_counts=True)
    return ids, counts.astype(np.int64)


def stream_stats(stream) -> Dict[str, int]:
    """F0 / F1 / 超额质量 / 频率大于 1 的 id 个数"""
    _, f = stream_frequencies(stream)
    return {
        "f0": int(f.size),
        "f1": int(f.sum()),
        "excess_mass": int(np.sum(f - 1)),
        "heavy_count": int(np.count_nonzero(f > 1)),
    }


def load_stream(path: str, fmt: str = "lines") -> np.ndarray:
    """
    读取数据流文件

    Args:
        fmt: lines（每行一个十进制 id）或 binary（小端 uint64）
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"数据流文件不存在: {path}")
    if fmt == "binary":
        return np.fromfile(path, dtype="<u8").astype(np.int64)
    if fmt == "lines":
        with open(path, "r", encoding="utf-8") as f:
            return np.array([int(line) for line in f if line.strip()], dtype=np.int64)
    raise ValueError(f"未知的数据流格式: {fmt}")


def save_stream(stream, path: str, fmt: str = "lines") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = as_stream(stream)
    if fmt == "binary":
        arr.astype("<u8").tofile(path)
    elif fmt == "lines":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(f"{int(x)}\n" for x in arr)
    else:
        raise ValueError(f"未知的数据流格式: {fmt}")
    return path


# --- CountSketch ---


class CountSketch:
    """
    r 行 × b 列的整数计数器

    第 r 行用 hash64(seed, row_salt[r], item) 的低位选桶、最高位定符号
    """

    def __init__(self, buckets: int, rows: int, seed: int = 0):
        if buckets < 1 or rows < 1:
            raise ValueError(f"buckets/rows 必须为正: {buckets}, {rows}")
        self.buckets = int(buckets)
        self.rows = int(rows)
        self.seed = int(seed)
        self.row_salts = [salt_from_name(f"count-sketch/{r}") for r in range(self.rows)]
        self.table = np.zeros((self.rows, self.buckets), dtype=np.int64)

    def _locate(self, items: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cols = np.empty((self.rows, items.size), dtype=np.int64)
        signs = np.empty((self.rows, items.size), dtype=np.int64)
        for r, salt in enumerate(self.row_salts):
            h = hash64_array(self.seed, salt, items)
            cols[r] = (h % np.uint64(self.buckets)).astype(np.int64)
            signs[r] = 1 - 2 * (h >> np.uint64(63)).astype(np.int64)
        return cols, signs

    def update(self, item: int, count: int = 1) -> "CountSketch":
        return self.update_many(np.array([item], dtype=np.int64), np.array([count]))

    def update_many(self, items, counts=None) -> "CountSketch":
        """批量更新；先按 id 聚合，由线性性与逐条更新结果相同"""
        items = as_stream(items)
        if counts is None:
            items, counts = np.unique(items, return_counts=True)
        counts = np.asarray(counts, dtype=np.int64)
        if items.size == 0:
            return self
        cols, signs = self._locate(items)
        for r in range(self.rows):
            delta = np.bincount(
                cols[r], weights=signs[r] * counts, minlength=self.buckets
            )
            self.table[r] += np.rint(delta).astype(np.int64)
        return self

    def estimate_many(self, items) -> np.ndarray:
        items = as_stream(items)
        if items.size == 0:
            return np.zeros(0, dtype=float)
        cols, signs = self._locate(items)
        rows = np.arange(self.rows)[:, None]
        votes = signs * self.table[rows, cols]
        return np.median(votes, axis=0)

    def estimate(self, item: int) -> float:
        return float(self.estimate_many(np.array([item], dtype=np.int64))[0])

    def compatible(self, other: "CountSketch") -> bool:
        return (self.buckets, self.rows, self.seed) == (other.buckets, other.rows, other.seed)

    def __add__(self, other: "CountSketch") -> "CountSketch":
        if not self.compatible(other):
            raise ValueError("只能合并形状和种子相同的 CountSketch")
        merged = CountSketch(self.buckets, self.rows, self.seed)
        merged.table = self.table + other.table
        return merged

    @property
    def space_bits(self) -> int:
        return self.rows * self.buckets * COUNTER_BITS


def cs_update(sk: CountSketch, u: Union[StreamUpdate, int]) -> CountSketch:
    item = u.item if isinstance(u, StreamUpdate) else int(u)
    return sk.update(item)


def cs_estimate(sk: CountSketch, item: int) -> float:
    """各行 sign·bucket 的中位数"""
    return sk.estimate(item)


def cs_merge(a: CountSketch, b: CountSketch) -> CountSketch:
    return a + b


def heavy_hitters(sk: CountSketch, candidates, cut: float) -> np.ndarray:
    """中位数估计不小于 cut 的候选 id"""
    candidates = as_stream(candidates)
    return candidates[sk.estimate_many(candidates) >= cut]


# --- 单遍 robust 估计 ---


def robust_mean_est(samples, trim: float) -> float:
    """
    双侧截尾均值: 丢掉最大和最小的各 ceil(trim·len) 个样本后取均值

    trim=0 时就是算术平均；全部被丢掉时退化为中位数
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("robust_mean_est 需要至少一个样本")
    if not 0 <= trim < 0.5:
        raise ValueError(f"trim 必须在 [0, 0.5) 内: {trim}")
    if trim == 0:
        return float(np.mean(arr))

    k = math.ceil(trim * arr.size - 1e-9)
    kept = np.sort(arr)[k : arr.size - k]
    if kept.size == 0:
        return float(np.median(arr))
    return float(kept.mean())


@dataclass
class StreamEstimate:
    """流式估计的输出及状态大小"""

    estimate: float
    space_bits: int
    details: Dict = field(default_factory=dict)


def default_trim(c_param: int, buckets: int, floor: float = 0.05) -> float:
    """约 2C 个桶可能被 heavy id 污染，截掉这一比例（至少 floor）"""
    return min(0.45, max(floor, 2 * c_param / buckets))


def robust_buckets(eps: float, c_param: int, bucket_factor: float = 8.0) -> int:
    """B = ceil(8·C/ε)，C = 0 时只用一个桶"""
    return max(1, math.ceil(bucket_factor * c_param / eps))


def robust_rate(eps: float, x_hint: float, sample_constant: float = 100.0, rule: str = "scaled") -> float:
    """
    单遍子采样率

    scaled:  p = min(1, K/(ε²X))，约 K/ε² 个 item 存活
    literal: p = min(1, 1/(K·ε²X))
    """
    if rule == "literal":
        return min(1.0, 1.0 / (sample_constant * eps ** 2 * x_hint))
    return min(1.0, sample_constant / (eps ** 2 * x_hint))


def run_one_pass_robust(
    stream,
    eps: float,
    c_param: int,
    x_hint: float,
    trim: Optional[float] = None,
    seed: int = 0,
    sample_constant: float = 100.0,
    bucket_factor: float = 8.0,
    trim_floor: float = 0.05,
    sample_rule: str = "scaled",
) -> StreamEstimate:
    if x_hint is None or x_hint <= 0:
        raise InvalidHint(f"x_hint 必须为正: {x_hint}")
    if not 0 < eps <= 1:
        raise ValueError(f"eps 必须在 (0, 1] 内: {eps}")

    items = as_stream(stream)
    p = robust_rate(eps, x_hint, sample_constant, sample_rule)
    buckets = robust_buckets(eps, c_param, bucket_factor)
    if trim is None:
        trim = default_trim(c_param, buckets, trim_floor)

    sampler = LevelSampler(SamplerSeed(seed, salt_from_name("stream-robust")))
    survivors = items[sampler.bernoulli_mask(items, p, "survive")]
    cells = (sampler.hash_many(survivors, salt_from_name("bucket")) % np.uint64(buckets)).astype(np.int64)
    f = np.bincount(cells, minlength=buckets)

    z = buckets * robust_mean_est(f, trim)
    return StreamEstimate(
        estimate=z / p,
        space_bits=buckets * COUNTER_BITS,
        details={"p": p, "buckets": buckets, "trim": trim, "survivors": int(survivors.size)},
    )


def one_pass_f0_robust(
    stream, eps: float, c_param: int, x_hint: float, trim: Optional[float] = None, seed: int = 0, **kwargs
) -> float:
    """单遍稳健估计: 返回 (1/p)·B·RobustMeanEst(f_1..f_B)"""
    return run_one_pass_robust(stream, eps, c_param, x_hint, trim=trim, seed=seed, **kwargs).estimate


def run_one_pass_auto(
    stream,
    eps: float,
    c_param: int,
    seed: int = 0,
    universe_size: Optional[int] = None,
    tau: int = 32,
    trim: Optional[float] = None,
    sample_constant: float = 100.0,
    bucket_factor: float = 8.0,
    trim_floor: float = 0.05,
) -> StreamEstimate:
    """
    不需要外部提示的单遍版本

    同一遍内为每个嵌套层级 l 维护: 上限为 τ 的不同 id 计数 + B 个桶和；
    遍历结束后由计数得到常数因子 X，再选采样率最接近 p 的层级
    """
    items = as_stream(stream)
    if items.size == 0:
        raise EmptyInput("数据流为空")
    n = universe_size or int(items.max()) + 1
    top = max(1, (n - 1).bit_length()) + 1
    buckets = robust_buckets(eps, c_param, bucket_factor)
    if trim is None:
        trim = default_trim(c_param, buckets, trim_floor)

    sampler = LevelSampler(SamplerSeed(seed, salt_from_name("stream-auto")))
    item_level = np.minimum(sampler.max_level(items), top)
    cells = (sampler.hash_many(items, salt_from_name("bucket")) % np.uint64(buckets)).astype(np.int64)

    # 第 l 层的桶和 = 所有 max_level >= l 的更新
    sums = np.zeros((top + 1, buckets), dtype=np.int64)
    distinct = np.zeros(top + 1, dtype=np.int64)
    ids, first = np.unique(items, return_index=True)
    id_level = item_level[first]
    for level in range(top + 1):
        in_level = item_level >= level
        sums[level] = np.bincount(cells[in_level], minlength=buckets)
        distinct[level] = min(tau, int(np.count_nonzero(id_level >= level)))

    x_level = 0
    for level in range(top, -1, -1):
        if distinct[level] >= tau:
            x_level = level
            break
    x = float(distinct[x_level] * 2 ** x_level)

    p = robust_rate(eps, x, sample_constant)
    use_level = max(0, min(top, int(math.floor(math.log2(1 / p)))))
    z = buckets * robust_mean_est(sums[use_level], trim)
    return StreamEstimate(
        estimate=z * 2 ** use_level,
        space_bits=(top + 1) * (buckets * COUNTER_BITS + tau * max(1, (n - 1).bit_length())),
        details={"x": x, "level": use_level, "buckets": buckets, "trim": trim},
    )


def one_pass_f0_auto(stream, eps: float, c_param: int, seed: int = 0, **kwargs) -> float:
    return run_one_pass_auto(stream, eps, c_param, seed=seed, **kwargs).estimate


# --- 两遍分层估计 ---


@dataclass(frozen=True)
class LevelSetConfig:
    """
    两遍算法的层级参数

    variant: large（C 较大）/ small（C < 1/ε）
    rule:    consistent（以 2^-β 采样、以 2^β 放大）/ literal（large 以 2^-(2ℓ-2) 采样、以 2^2β 放大）
    """

    variant: str
    levels: int
    buckets: int
    rows: int
    threshold: float
    beta_offset: float
    rule: str = "consistent"

    def __post_init__(self):
        if self.levels < 1 or self.buckets < 1 or self.rows < 1 or self.threshold < 1:
            raise ValueError(f"LevelSetConfig 需要 L, B, r, T >= 1: {self}")
        if self.variant not in ("large", "small"):
            raise ValueError(f"未知的 variant: {self.variant}")
        if self.rule not in ("consistent", "literal"):
            raise ValueError(f"未知的 rule: {self.rule}")

    def beta(self, level: int) -> float:
        return max(0.0, level - self.beta_offset)

    def sample_exponent(self, level: int) -> float:
        """第 level 层的采样率为 2^-exponent；第 1 层恒为全集"""
        if level <= 1:
            return 0.0
        if self.rule == "consistent":
            return self.beta(level)
        return float(2 * level - 2) if self.variant == "large" else float(level - 1)

    def rescale(self, level: int) -> float:
        b = self.beta(level)
        if self.rule == "literal" and self.variant == "large":
            return 2.0 ** (2 * b)
        return 2.0 ** b

    def band(self, f: int) -> Optional[int]:
        """f >= T 返回 0（精确区）；f ∈ [T/2^l, T/2^(l-1)) 返回 l；过小返回 None"""
        if f >= self.threshold:
            return 0
        for level in range(1, self.levels + 1):
            if f >= self.threshold / 2 ** level:
                return level
        return None

    @property
    def report_cut(self) -> float:
        return self.threshold / 2 ** self.levels


def level_set_config(
    eps: float,
    n: int,
    c_param: Optional[int] = None,
    variant: str = "large",
    rule: str = "consistent",
    polylog_power: float = 3.0,
    rows_factor: float = 4.0,
    threshold_constant: float = 100.0,
    levels: Optional[int] = None,
    buckets: Optional[int] = None,
    rows: Optional[int] = None,
    threshold: Optional[float] = None,
) -> LevelSetConfig:
    """按 ε、n、C 推导 L / B / T / r，显式传入的值覆盖推导结果"""
    if not 0 < eps <= 1:
        raise ValueError(f"eps 必须在 (0, 1] 内: {eps}")
    log_term = math.log2(max(n, 2) / eps)
    c = max(1, c_param or 1)

    if variant == "large":
        default_buckets = math.ceil(c * log_term ** polylog_power)
        offset = math.log2(10 * (math.sqrt(c) / eps) * log_term)
    else:
        default_buckets = math.ceil((1 / eps) * log_term ** polylog_power)
        offset = math.log2((10 / eps) * log_term)

    return LevelSetConfig(
        variant=variant,
        levels=levels or math.ceil(math.log2(1 / eps)) + 4,
        buckets=buckets or default_buckets,
        rows=rows or math.ceil(rows_factor * math.log2(max(n, 2))),
        threshold=threshold or (threshold_constant / eps ** 2) * log_term ** 2,
        beta_offset=offset,
        rule=rule,
    )


def _level_mask(sampler: LevelSampler, cfg: LevelSetConfig, ids: np.ndarray, level: int) -> np.ndarray:
    exponent = cfg.sample_exponent(level)
    # 同一个 salt 的阈值比较，各层天然嵌套
    return sampler.bernoulli_mask(ids, 2.0 ** -exponent, "levels")


def run_two_pass(stream_pass1, stream_pass2, cfg: LevelSetConfig, seed: int = 0) -> StreamEstimate:
    """
    第一遍: 每层在 S_l 上跑 CountSketch，估计值 >= T/2^L 的 id 成为候选
    第二遍: 精确统计候选的 f_j，每个 id 只计入它真实所在的频段
    输出 F1(S_1) - Σ M_l
    """
    s1 = as_stream(stream_pass1)
    s2 = as_stream(stream_pass2)
    if s1.size != s2.size:
        raise PassMismatch(f"两遍的更新数不一致: {s1.size} vs {s2.size}")

    sampler = LevelSampler(SamplerSeed(seed, salt_from_name("stream-two-pass")))
    ids, counts = np.unique(s1, return_counts=True)

    candidates = []
    space_bits = 0
    for level in range(1, cfg.levels + 1):
        mask = _level_mask(sampler, cfg, ids, level)
        sk = CountSketch(cfg.buckets, cfg.rows, seed=mix64(seed ^ level))
        sk.update_many(ids[mask], counts[mask])
        space_bits += sk.space_bits
        candidates.append(heavy_hitters(sk, ids[mask], cfg.report_cut))
    tracked = np.unique(np.concatenate(candidates)) if candidates else np.zeros(0, np.int64)

    # 第二遍只对候选精确计数
    hit = s2[np.isin(s2, tracked)]
    exact_ids, exact_f = np.unique(hit, return_counts=True)

    m_hat = np.zeros(cfg.levels + 1, dtype=float)
    for j, f in zip(exact_ids, exact_f):
        band = cfg.band(int(f))
        if band is None:
            continue
        if band == 0:
            m_hat[1] += f - 1
            continue
        if _level_mask(sampler, cfg, np.array([j]), band)[0]:
            m_hat[band] += cfg.rescale(band) * (f - 1)

    id_bits = max(1, int(ids.max()).bit_length()) if ids.size else 1
    space_bits += int(tracked.size) * (id_bits + COUNTER_BITS)
    return StreamEstimate(
        estimate=float(s1.size - m_hat.sum()),
        space_bits=space_bits,
        details={
            "tracked": int(tracked.size),
            "m_hat": [float(x) for x in m_hat[1:]],
            "config": cfg,
        },
    )


def two_pass_f0(
    stream_pass1,
    stream_pass2,
    eps: float,
    c_param: int,
    cfg: Optional[LevelSetConfig] = None,
    seed: int = 0,
) -> float:
    """两遍 level-set 估计（C 较大）"""
    if cfg is None:
        n = int(as_stream(stream_pass1).max()) + 1 if len(stream_pass1) else 2
        cfg = level_set_config(eps, n, c_param, variant="large")
    return run_two_pass(stream_pass1, stream_pass2, cfg, seed=seed).estimate


def two_pass_f0_small(
    stream_pass1,
    stream_pass2,
    eps: float,
    cfg: Optional[LevelSetConfig] = None,
    seed: int = 0,
) -> float:
    """两遍 level-set 估计（频率大于 1 的 id 少于 1/ε）"""
    if cfg is None:
        n = int(as_stream(stream_pass1).max()) + 1 if len(stream_pass1) else 2
        cfg = level_set_config(eps, n, variant="small")
    return run_two_pass(stream_pass1, stream_pass2, cfg, seed=seed).estimate


def main():
    import argparse

    parser = argparse.ArgumentParser(description="数据流 F0 估计")
    parser.add_argument("stream_file", help="数据流文件")
    parser.add_argument("--format", default="lines", choices=["lines", "binary"])
    parser.add_argument("--eps", type=float, default=0.1)
    parser.add_argument("--c-param", type=int, default=None, help="频率大于 1 的 id 数，默认精确统计")
    parser.add_argument("--seed", type=int, default=0)

    args = parser.parse_args()

    try:
        stream = load_stream(args.stream_file, args.format)
    except (OSError, ValueError) as e:
        print(f"[ERROR] 读取数据流失败: {e}")
        raise SystemExit(1)

    if stream.size == 0:
        print(f"[ERROR] 数据流为空: {args.stream_file}")
        raise SystemExit(1)

    stats = stream_stats(stream)
    c_param = args.c_param if args.c_param is not None else stats["heavy_count"]
    print(f"[INFO] 数据流: {Path(args.stream_file).name}")
    print(f"       F1={stats['f1']}  F0={stats['f0']}  C={stats['heavy_count']}")

    try:
        one = run_one_pass_auto(stream, args.eps, c_param, seed=args.seed)
        two = run_two_pass(
            stream, stream, level_set_config(args.eps, int(stream.max()) + 1, c_param), seed=args.seed
        )
    except (F0Error, ValueError) as e:
        print(f"[ERROR] 估计失败: {e}")
        raise SystemExit(1)

    print(f"   单遍 robust: {one.estimate:.1f}  ({one.space_bits} bits)")
    print(f"   两遍分层:    {two.estimate:.1f}  ({two.space_bits} bits)")


if __name__ == "__main__":
    main()
