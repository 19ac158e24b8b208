import numpy as np
import pytest

from core_model import Dataset, EmptyDataset, ground_truth
from coordinator_protocols import (
    COORDINATOR,
    ChannelViolation,
    InvalidBudget,
    NonTermination,
    SimNetwork,
    choose_level,
    collision_bounded_f0,
    constant_factor_f0,
    constant_factor_threshold,
    duplication_estimate,
    eps_approx_f0,
    level_collisions,
    verify_budget,
)
from workloads import PlantedSpec, ZipfSpec, gen_collision_scaled, gen_planted, gen_zipfian_dataset


def net_for(d, seed=0):
    return SimNetwork.from_dataset(d, seed=seed)


# --- 模拟器与记账 ---


def test_players_cannot_talk_directly(small_dataset):
    net = net_for(small_dataset)
    with pytest.raises(ChannelViolation):
        net.send(0, 1, 8, "x")
    with pytest.raises(ChannelViolation):
        net.send(COORDINATOR, COORDINATOR, 8, "x")


@pytest.mark.parametrize(
    "run",
    [
        lambda net: constant_factor_f0(net),
        lambda net: eps_approx_f0(net, 0.5),
        lambda net: collision_bounded_f0(net, 0.5, 10),
        lambda net: duplication_estimate(net, 0.5, 10),
    ],
)
def test_no_players_is_empty_dataset(run):
    net = SimNetwork([], 10 ** 4)
    assert net.alpha == 0
    with pytest.raises(EmptyDataset):
        run(net)
    assert net.ledger.total_bits == 0
    assert net.ledger.message_count == 0


def test_ledger_totals_match_entries(small_dataset):
    res_net = net_for(small_dataset, seed=4)
    res = eps_approx_f0(res_net, 0.5)
    ledger = res_net.ledger
    assert res.bits_used == ledger.total_bits
    assert ledger.total_bits == sum(e.bits for e in ledger.per_round)
    assert all(e.bits >= ledger.header_bits for e in ledger.per_round)


def test_cost_model_constants():
    d = Dataset.from_sets(1000, [set(range(10)), set(range(5, 20))])
    net = net_for(d)
    assert net.ledger.item_id_bits == 10
    assert net.ledger.count_bits == (25).bit_length()


def test_empty_dataset_rejected():
    net = net_for(Dataset.from_sets(10, [set(), set()]))
    with pytest.raises(EmptyDataset):
        constant_factor_f0(net)


def test_runs_replay_exactly(planted_dataset):
    a = collision_bounded_f0(net_for(planted_dataset, 9), 0.2, 137, oversample=10)
    b = collision_bounded_f0(net_for(planted_dataset, 9), 0.2, 137, oversample=10)
    assert a == b


# --- 常数因子 ---


def test_threshold_floor():
    assert constant_factor_threshold(10 ** 6) == 36
    assert constant_factor_threshold(2) == 32


def test_single_item_is_exact():
    res = constant_factor_f0(net_for(Dataset.from_sets(10 ** 6, [{42}])))
    assert res.estimate == 1
    assert res.level_used == 0


def test_small_f0_is_exact():
    d = Dataset.from_sets(10 ** 5, [{1, 2, 3}, {3, 4, 5}])
    assert constant_factor_f0(net_for(d)).estimate == 5


@pytest.mark.slow
def test_constant_factor_is_within_four():
    d = gen_zipfian_dataset(ZipfSpec(1.5, 4.0, 40000, seed=1), alpha=8, universe_size=10 ** 5)
    f0 = ground_truth(d).f0
    hits = 0
    for seed in range(100):
        x = constant_factor_f0(net_for(d, seed)).estimate
        hits += f0 / 4 <= x <= 4 * f0
    assert hits >= 90


# --- 层级采样 (alg1) ---


def test_choose_level():
    assert choose_level(100, 0.1) == 0
    # X / 2^i > 1000/ε² = 1000 的最大 i
    assert choose_level(10 ** 4, 1.0) == 3


def test_alg1_exact_without_subsampling():
    d = gen_planted(PlantedSpec(100, 20, 4, seed=2), 10 ** 4)
    res = eps_approx_f0(net_for(d), 0.1)
    assert res.level_used == 0
    assert res.estimate == 100


def test_alg1_identical_single_item():
    d = Dataset.from_sets(50, [{7}] * 6)
    assert eps_approx_f0(net_for(d), 0.5).estimate == 1


@pytest.mark.slow
def test_alg1_accuracy_on_zipf():
    d = gen_zipfian_dataset(ZipfSpec(1.2, 8.0, 200000, seed=5), alpha=8, universe_size=10 ** 6)
    f0 = ground_truth(d).f0
    eps = 0.05
    hits = sum(
        abs(eps_approx_f0(net_for(d, seed), eps).estimate - f0) <= eps * f0 for seed in range(100)
    )
    assert hits >= 90


@pytest.mark.slow
def test_alg1_is_unbiased():
    d = gen_planted(PlantedSpec(20000, 2000, 4, seed=8), 10 ** 6)
    f0 = ground_truth(d).f0
    est = np.array([eps_approx_f0(net_for(d, seed), 0.5, oversample=10).estimate for seed in range(1000)])
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert abs(est.mean() - f0) <= 3 * se


@pytest.mark.slow
def test_alg1_payload_grows_like_sqrt_beta():
    medians = []
    for beta in (1, 4, 16):
        d = gen_collision_scaled(10 ** 4, beta, alpha=8, n=10 ** 6, seed=beta)
        bits = []
        for seed in range(50):
            net = net_for(d, seed)
            eps_approx_f0(net, 0.1)
            bits.append(net.ledger.payload_bits("alg1-send"))
        medians.append(np.median(bits))
    for lo, hi in zip(medians, medians[1:]):
        assert 1.4 <= hi / lo <= 6


# --- 碰撞预算 (alg2) ---


def test_alg2_zero_budget_on_disjoint_shards():
    d = gen_planted(PlantedSpec(500, 0, 4, seed=1), 10 ** 4)
    res = collision_bounded_f0(net_for(d), 0.1, 0)
    assert res.details["p"] == 0
    assert res.estimate == 500


def test_alg2_full_rate_is_exact():
    d = gen_planted(PlantedSpec(1000, 50, 4, seed=6), 10 ** 5)
    res = collision_bounded_f0(net_for(d), 0.1, 50)
    assert res.details["p"] == 1.0
    assert res.level_used == 0
    assert res.estimate == 1000


def test_alg2_rejects_negative_budget(small_dataset):
    with pytest.raises(InvalidBudget):
        collision_bounded_f0(net_for(small_dataset), 0.1, -1)


def test_verify_budget(small_dataset):
    net = net_for(small_dataset)
    res = collision_bounded_f0(net, 0.5, 0)
    with pytest.raises(InvalidBudget):
        verify_budget(net, res, 0)
    verify_budget(net, res, 4)


@pytest.mark.slow
def test_alg2_planted_accuracy_and_t_phase():
    d = gen_planted(PlantedSpec(10 ** 4, 500, 8, seed=12), 10 ** 6)
    f0 = ground_truth(d).f0
    eps = 0.1
    close = light = 0
    for seed in range(100):
        res = collision_bounded_f0(net_for(d, seed), eps, 500)
        close += abs(res.estimate - f0) <= eps * f0
        light += res.details["t_items_sent"] <= 4 * res.details["p"] * res.details["level_f1"]
    assert close >= 90
    assert light >= 95


@pytest.mark.slow
def test_alg2_excess_term_is_unbiased():
    d = gen_planted(PlantedSpec(10 ** 4, 50, 4, seed=21), 10 ** 6)
    diffs = []
    for seed in range(1000):
        net = net_for(d, seed)
        res = collision_bounded_f0(net, 1.0, 50)
        p = res.details["p"]
        # 重数至多为 2 时，层级上的碰撞数就是超额质量
        diffs.append(res.details["w"] / p - level_collisions(net, res.level_used))
    diffs = np.array(diffs)
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert abs(diffs.mean()) <= 3 * se + 1e-9


@pytest.mark.slow
def test_alg2_subsampled_level_accuracy_and_t_phase():
    # C = F0/4，oversample 取大使 X/2^i 上 p < 1，多数种子停在第 1 层或更深
    d = gen_collision_scaled(10 ** 5, 0.25, alpha=8, n=10 ** 6, seed=5)
    gt = ground_truth(d)
    f0, c = gt.f0, gt.pairwise_collisions
    eps = 0.5
    est, deep, sub = [], 0, 0
    for seed in range(100):
        res = collision_bounded_f0(net_for(d, seed), eps, c, oversample=10 ** 4)
        p = res.details["p"]
        assert res.details["t_items_sent"] <= 2 * p * res.details["level_f1"]
        deep += res.level_used > 0
        sub += p < 1
        est.append(res.estimate)
    est = np.array(est)
    assert deep >= 50
    assert sub >= 90
    assert np.all(np.abs(est - f0) <= eps * f0)
    # 超额质量也要乘 2^i，只扣 W/p 会系统性偏高
    assert np.sum(np.abs(est - f0) <= 0.05 * f0) >= 95
    assert abs(est.mean() - f0) <= 0.01 * f0


# --- 重复项估计 ---


def test_dup_disjoint_shards_is_zero():
    d = gen_planted(PlantedSpec(400, 0, 4, seed=3), 10 ** 4)
    res = duplication_estimate(net_for(d), 0.25, 1, p_constant=1)
    assert res.details["p"] == 1.0
    assert res.estimate == 0
    assert res.converged


def test_dup_two_players_sharing_ten():
    shared = set(range(100, 110))
    d = Dataset.from_sets(1000, [shared | {1, 2, 3}, shared | {4, 5}])
    res = duplication_estimate(net_for(d, 5), 0.25, 10)
    assert res.details["p"] == 1.0
    assert res.estimate == 10


def test_dup_strict_raises_without_convergence():
    d = gen_planted(PlantedSpec(3000, 0, 8, seed=4), 10 ** 5)
    # U 取全集，位向量只有 16 位，不同 item 必然落在同一位置
    res = duplication_estimate(net_for(d), 1.0, 10 ** 6, max_iters=1, p_constant=10 ** 6)
    assert not res.converged
    with pytest.raises(NonTermination):
        duplication_estimate(
            net_for(d), 1.0, 10 ** 6, max_iters=1, p_constant=10 ** 6, strict=True
        )


def test_dup_rejects_zero_budget(small_dataset):
    with pytest.raises(InvalidBudget):
        duplication_estimate(net_for(small_dataset), 0.25, 0)


@pytest.mark.slow
@pytest.mark.parametrize("dupes", [32, 256])
def test_dup_planted_accuracy(dupes):
    alpha, s, eps = 8, 500, 0.25
    d = gen_planted(PlantedSpec(alpha * s - dupes, dupes, alpha, seed=dupes), 10 ** 6)
    close = quick = 0
    for seed in range(100):
        res = duplication_estimate(net_for(d, seed), eps, dupes)
        close += abs(res.estimate - dupes) <= 2 * eps * dupes
        quick += res.details["iterations"] <= 20
    assert close >= 85
    assert quick >= 99
