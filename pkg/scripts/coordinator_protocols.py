#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
coordinator 模型模拟与分布式 F0 协议
- 每个 player 只能与 coordinator 通信，player 之间没有信道
- 每条消息按固定成本模型记入 CommLedger（32 位头 + 载荷）
- 协议: 常数因子 F0、层级采样 ε-近似 (alg1)、碰撞预算 ε-近似 (alg2)、重复项估计
"""

import math
from typing import Dict, List, Optional, Sequence
from dataclasses import dataclass, field

import numpy as np

from core_model import Dataset, EmptyDataset, F0Error, ShardVector
from shared_sampling import LevelSampler, SamplerSeed, salt_from_name

COORDINATOR = -1

HEADER_BITS = 32
# 控制消息: 层级编号 0..64 / 单精度采样率
LEVEL_BITS = 7
RATE_BITS = 32

# 两个 ε-近似协议的层级都取 max(0, i0)
LEVEL_RULE = max

DEFAULT_OVERSAMPLE = 1000.0


class ChannelViolation(F0Error):
    """试图在两个 player 之间直接发送消息"""


class InvalidBudget(F0Error):
    """碰撞预算不满足协议前提"""


class NonTermination(F0Error):
    """重复项估计在 max_iters 轮内没有收敛"""


def _ceil_log2(x: int) -> int:
    return max(1, (int(x) - 1).bit_length())


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError(f"eps 必须在 (0, 1] 内: {eps}")


@dataclass(frozen=True)
class LedgerEntry:
    round_index: int
    direction: str  # "up": player → coordinator, "down": coordinator → player
    player_id: int
    bits: int
    payload_bits: int
    phase: str


class CommLedger:
    """按消息记账的通信成本"""

    def __init__(self, universe_size: int, f1: int, header_bits: int = HEADER_BITS):
        self.item_id_bits = _ceil_log2(universe_size)
        self.count_bits = max(1, int(f1).bit_length())
        self.header_bits = header_bits
        self.total_bits = 0
        self.per_round: List[LedgerEntry] = []

    def charge(
        self, round_index: int, direction: str, player_id: int, payload_bits: int, phase: str
    ) -> int:
        bits = self.header_bits + int(payload_bits)
        self.per_round.append(
            LedgerEntry(round_index, direction, player_id, bits, int(payload_bits), phase)
        )
        self.total_bits += bits
        return bits

    def item_list_bits(self, count: int) -> int:
        return int(count) * self.item_id_bits

    @staticmethod
    def position_list_bits(count: int, vector_size: int) -> int:
        return int(count) * _ceil_log2(vector_size)

    def payload_bits(self, phase: Optional[str] = None) -> int:
        return sum(
            e.payload_bits for e in self.per_round if phase is None or e.phase == phase
        )

    def bits_by_phase(self) -> Dict[str, int]:
        totals: Dict[str, int] = {}
        for e in self.per_round:
            totals[e.phase] = totals.get(e.phase, 0) + e.bits
        return totals

    @property
    def message_count(self) -> int:
        return len(self.per_round)


@dataclass
class ProtocolResult:
    """一次协议运行的输出"""

    protocol: str
    estimate: float
    bits_used: int
    rounds: int
    level_used: int
    params_echo: Dict = field(default_factory=dict)
    converged: bool = True
    details: Dict = field(default_factory=dict)


class SimNetwork:
    """
    星型网络模拟器

    只有 upload (player → coordinator) 与 downlink (coordinator → player)
    两种投递方式；send() 会拒绝任何不经过 coordinator 的消息
    """

    def __init__(
        self,
        players: Sequence[ShardVector],
        universe_size: int,
        seed: int = 0,
        salt: int = 0,
    ):
        self.players = list(players)
        self.universe_size = universe_size
        self.sampler = LevelSampler(SamplerSeed(seed, salt), universe_size)
        self.f1 = sum(len(p) for p in self.players)
        self.ledger = CommLedger(universe_size, self.f1)
        self.round_index = 0

    @classmethod
    def from_dataset(cls, d: Dataset, seed: int = 0, salt: int = 0) -> "SimNetwork":
        return cls(d.shards, d.universe_size, seed=seed, salt=salt)

    @property
    def alpha(self) -> int:
        return len(self.players)

    @property
    def seed(self) -> int:
        return self.sampler.seed.seed

    def require_nonempty(self) -> None:
        if self.f1 == 0:
            raise EmptyDataset("数据集为空 (F1 = 0)")

    def next_round(self) -> int:
        self.round_index += 1
        return self.round_index

    def send(self, sender: int, receiver: int, payload_bits: int, phase: str) -> int:
        if sender == receiver or COORDINATOR not in (sender, receiver):
            raise ChannelViolation(
                f"player {sender} → player {receiver}: player 之间没有信道"
            )
        if sender == COORDINATOR:
            return self.ledger.charge(self.round_index, "down", receiver, payload_bits, phase)
        return self.ledger.charge(self.round_index, "up", sender, payload_bits, phase)

    def upload(self, player_id: int, payload_bits: int, phase: str) -> int:
        return self.send(player_id, COORDINATOR, payload_bits, phase)

    def downlink(self, player_id: int, payload_bits: int, phase: str) -> int:
        return self.send(COORDINATOR, player_id, payload_bits, phase)

    def broadcast(self, payload_bits: int, phase: str) -> None:
        for p in self.players:
            self.downlink(p.player_id, payload_bits, phase)

    def upload_items(self, player_id: int, items: np.ndarray, phase: str) -> np.ndarray:
        """player 发送一组 id（长度由消息头定界）"""
        self.upload(player_id, self.ledger.item_list_bits(items.size), phase)
        return items

    def upload_count(self, player_id: int, value: int, phase: str) -> int:
        self.upload(player_id, self.ledger.count_bits, phase)
        return int(value)

    def result(self, protocol: str, estimate: float, level: int, **kwargs) -> ProtocolResult:
        return ProtocolResult(
            protocol=protocol,
            estimate=float(estimate),
            bits_used=self.ledger.total_bits,
            rounds=self.round_index,
            level_used=level,
            **kwargs,
        )


def constant_factor_threshold(universe_size: int) -> int:
    """τ = max(32, ceil(8 · log2(log2(n) + 2)))"""
    return max(32, math.ceil(8 * math.log2(math.log2(max(universe_size, 1)) + 2)))


def choose_level(x: float, eps: float, oversample: float = DEFAULT_OVERSAMPLE) -> int:
    """
    i0 = 满足 X / 2^i0 > oversample/ε² 的最大整数，返回 LEVEL_RULE(0, i0)

    X 不超过阈值时 i0 为负，结果取 0（不子采样）
    """
    k = oversample / eps ** 2
    if x <= k:
        return LEVEL_RULE(0, -1)
    i = 0
    while x / 2 ** (i + 1) > k:
        i += 1
    return LEVEL_RULE(0, i)


def constant_factor_f0(net: SimNetwork, tau: Optional[int] = None) -> ProtocolResult:
    """
    常数因子 (4-近似) F0

    从 ceil(log2 n) 层往下走，每轮 player 只补发新进入 S_i 的 item；
    coordinator 见到 τ 个不同 item 或到达第 0 层时停止，返回 (见到的个数)·2^i
    """
    net.require_nonempty()
    tau = tau or constant_factor_threshold(net.universe_size)
    sampler = net.sampler.derive("const-factor")
    top = _ceil_log2(net.universe_size)

    top_levels = [np.minimum(sampler.max_level(p.items), top) for p in net.players]
    seen = np.zeros(0, dtype=np.int64)

    level = top
    for level in range(top, -1, -1):
        net.next_round()
        net.broadcast(LEVEL_BITS, "const-factor")
        received = []
        for p, levels in zip(net.players, top_levels):
            fresh = p.items[levels == level]
            received.append(net.upload_items(p.player_id, fresh, "const-factor"))
        seen = np.union1d(seen, np.concatenate(received))
        if seen.size >= tau:
            break

    return net.result(
        "const4",
        seen.size * 2 ** level,
        level,
        params_echo={"tau": tau, "seed": net.seed},
        details={"distinct_seen": int(seen.size)},
    )


def eps_approx_f0(
    net: SimNetwork, eps: float, oversample: float = DEFAULT_OVERSAMPLE, tau: Optional[int] = None
) -> ProtocolResult:
    """
    层级采样 ε-近似: 先取 4-近似 X，再让每个 player 发送 T_i = S_i ∩ shard，
    返回 (不同 id 个数)·2^i
    """
    _check_eps(eps)
    const = constant_factor_f0(net, tau=tau)
    x = const.estimate
    level = choose_level(x, eps, oversample)
    sampler = net.sampler.derive("levels")

    net.next_round()
    net.broadcast(LEVEL_BITS, "alg1-level")
    received = []
    for p in net.players:
        sampled = p.items[sampler.level_mask(p.items, level)]
        received.append(net.upload_items(p.player_id, sampled, "alg1-send"))
    z = np.unique(np.concatenate(received)).size

    return net.result(
        "alg1",
        z * 2 ** level,
        level,
        params_echo={"eps": eps, "seed": net.seed, "oversample": oversample},
        details={"x": x, "z": int(z), "items_sent": int(sum(r.size for r in received))},
    )


def collision_bounded_f0(
    net: SimNetwork,
    eps: float,
    c_budget: int,
    oversample: float = DEFAULT_OVERSAMPLE,
    tau: Optional[int] = None,
) -> ProtocolResult:
    """
    碰撞预算 ε-近似: Z = Σ|shard ∩ S_i|（每个 player 只发一个计数），
    再在 S_i 的 Bernoulli(p) 子集 T 上精确求超额质量 W，返回 (Z - W/p)·2^i

    Z 和 W/p 都是 S_i 上的量，p 按 S_i 的 F0 估计 X/2^i 取值

    c_budget 是调用方的承诺（S_i 上的成对碰撞数不超过它），协议本身不校验
    """
    _check_eps(eps)
    if c_budget < 0:
        raise InvalidBudget(f"c_budget 不能为负: {c_budget}")

    const = constant_factor_f0(net, tau=tau)
    x = const.estimate
    level = choose_level(x, eps, oversample)
    sampler = net.sampler.derive("levels")

    x_level = x / 2 ** level
    eta = eps / 10
    p = min(1.0, 100 * c_budget / (eta ** 2 * x_level ** 2)) if c_budget > 0 else 0.0

    net.next_round()
    net.broadcast(LEVEL_BITS, "alg2-level")
    z = 0
    level_items = []
    for pl in net.players:
        sampled = pl.items[sampler.level_mask(pl.items, level)]
        level_items.append(sampled)
        z += net.upload_count(pl.player_id, sampled.size, "alg2-count")

    w = 0
    t_items_sent = 0
    if p > 0:
        net.next_round()
        net.broadcast(RATE_BITS, "alg2-rate")
        received = []
        for pl, sampled in zip(net.players, level_items):
            t = sampled[sampler.bernoulli_mask(sampled, p, "alg2-t")]
            received.append(net.upload_items(pl.player_id, t, "alg2-t"))
        t_all = np.concatenate(received)
        t_items_sent = int(t_all.size)
        if t_all.size:
            _, holders = np.unique(t_all, return_counts=True)
            w = int(np.sum(holders - 1))

    correction = w / p if p > 0 else 0.0
    return net.result(
        "alg2",
        (z - correction) * 2 ** level,
        level,
        params_echo={"eps": eps, "c_budget": c_budget, "seed": net.seed},
        details={
            "x": x,
            "x_level": x_level,
            "z": z,
            "p": p,
            "w": w,
            "t_items_sent": t_items_sent,
            "level_f1": int(sum(s.size for s in level_items)),
        },
    )


def level_collisions(net: SimNetwork, level: int) -> int:
    """S_i 上的精确成对碰撞数（仅供测试/实验事后校验预算）"""
    sampler = net.sampler.derive("levels")
    parts = [p.items[sampler.level_mask(p.items, level)] for p in net.players]
    if not parts:
        return 0
    all_items = np.concatenate(parts)
    if all_items.size == 0:
        return 0
    _, h = np.unique(all_items, return_counts=True)
    return int(np.sum(h * (h - 1) // 2))


def verify_budget(net: SimNetwork, result: ProtocolResult, c_budget: int) -> None:
    """事后检查 c_budget 是否覆盖所选层级的碰撞数，不满足时抛 InvalidBudget"""
    actual = level_collisions(net, result.level_used)
    if c_budget < actual:
        raise InvalidBudget(
            f"层级 {result.level_used} 上有 {actual} 个成对碰撞，超过预算 {c_budget}"
        )


def duplication_estimate(
    net: SimNetwork,
    eps: float,
    c_budget: int,
    xi: float = 8.0,
    max_iters: int = 64,
    p_constant: float = 1.0,
    strict: bool = False,
) -> ProtocolResult:
    """
    重复项估计

    1. 公共随机性以 p = min(1, p_constant/(C·ε²)) 采样 universe 得到 U
    2. 每轮所有 player 把剩余 item 哈希到大小 m 的位向量，上报非零位置
    3. 只被一个 player 上报的位置上的 item 不可能重复，删除
    4. 直到没有两个不同 item 落在同一位置（或达到 max_iters）
    5. D' = 被至少两个 player 上报的位置数，输出 D'/p

    每轮使用新的位置哈希；未收敛时返回最后一轮的 D'/p 并置 converged=False
    """
    _check_eps(eps)
    if c_budget < 1:
        raise InvalidBudget(f"重复项估计需要 c_budget >= 1: {c_budget}")
    net.require_nonempty()

    p = min(1.0, p_constant / (c_budget * eps ** 2))
    universe = net.sampler.derive("dup-universe")
    remaining = [pl.items[universe.bernoulli_mask(pl.items, p, "dup-u")] for pl in net.players]

    s_max = max(len(pl) for pl in net.players)
    m = max(16, math.ceil(xi * net.alpha * s_max / (c_budget * eps ** 2)))

    converged = False
    iterations = 0
    d_prime = 0
    while iterations < max_iters:
        iterations += 1
        net.next_round()
        hasher = net.sampler.derive(f"dup-positions/{iterations}")

        positions = []
        for pl, items in zip(net.players, remaining):
            pos = (hasher.hash_many(items) % np.uint64(m)).astype(np.int64)
            reported = np.unique(pos)
            net.upload(
                pl.player_id, CommLedger.position_list_bits(reported.size, m), "dup-report"
            )
            positions.append(pos)

        reported_all = np.concatenate([np.unique(pos) for pos in positions])
        if reported_all.size:
            slots, reporters = np.unique(reported_all, return_counts=True)
            shared = slots[reporters >= 2]
        else:
            shared = np.zeros(0, dtype=np.int64)
        d_prime = int(shared.size)

        # 模拟器层面的终止判定: 剩余的不同 item 是否两两落在不同位置
        union_items = np.concatenate(remaining)
        union_pos = np.concatenate(positions)
        if union_items.size:
            _, first = np.unique(union_items, return_index=True)
            distinct_pos = union_pos[first]
            clash = np.unique(distinct_pos).size < distinct_pos.size
        else:
            clash = False
        if not clash:
            converged = True
            break

        for pl in net.players:
            net.downlink(
                pl.player_id, CommLedger.position_list_bits(shared.size, m), "dup-shared"
            )
        remaining = [
            items[np.isin(pos, shared)] for items, pos in zip(remaining, positions)
        ]

    if not converged and strict:
        raise NonTermination(f"重复项估计在 {max_iters} 轮内没有收敛")

    return net.result(
        "dup",
        d_prime / p,
        0,
        params_echo={"eps": eps, "c_budget": c_budget, "seed": net.seed, "xi": xi},
        converged=converged,
        details={"p": p, "d_prime": d_prime, "iterations": iterations, "vector_size": m},
    )


PROTOCOLS = {
    "const4": constant_factor_f0,
    "alg1": eps_approx_f0,
    "alg2": collision_bounded_f0,
    "dup": duplication_estimate,
}
