#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
批量实验
1. 通信量 vs ε（comm）
2. 准确度 vs ε（accuracy）
3. 边列表直方图与 Zipf 拟合（histograms）

结果写成 CSV，供外部作图

使用方法：
    python run_experiments.py --mode comm --protocol alg1 --eps-pows 0..6 --seeds 5
"""

import csv
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from core_model import (
    Dataset,
    F0Error,
    duplicate_count_exact,
    f0_exact,
    load_dataset,
    pairwise_collisions_exact,
)
from coordinator_protocols import (
    SimNetwork,
    collision_bounded_f0,
    constant_factor_f0,
    duplication_estimate,
    eps_approx_f0,
)
from streaming import (
    level_set_config,
    load_stream,
    run_one_pass_auto,
    run_two_pass,
    stream_stats,
)
from workloads import (
    PlantedSpec,
    ZipfSpec,
    dataset_to_stream,
    gen_planted,
    gen_zipfian_dataset,
    load_edges,
    partition_by_receiver,
)
from experiment_presets import ExperimentPresetManager, ProtocolConstants

DISTRIBUTED = ("const4", "alg1", "alg2", "dup")
STREAMING = ("stream1p", "stream2p", "stream2ps")
PROTOCOL_CHOICES = DISTRIBUTED + STREAMING

SCHEMA_VERSION = 1
BASELINE_C0 = 1.0

COLUMNS = ["protocol", "eps", "c_budget", "seed", "estimate", "f0_true", "rel_err", "bits", "rounds"]


@dataclass
class ExperimentConfig:
    """一次批量实验的全部参数"""

    protocol: str
    eps_list: List[float]
    seeds: int = 1
    seed0: int = 0
    workload: Dict = field(default_factory=lambda: {"kind": "planted"})
    out: Optional[str] = None
    stream_file: Optional[str] = None
    stream_format: str = "lines"
    c_budget: Optional[int] = None
    workers: int = 1
    constants: ProtocolConstants = field(default_factory=ProtocolConstants)
    quiet: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOL_CHOICES:
            raise ValueError(f"未知协议: {self.protocol}")
        if not self.eps_list:
            raise ValueError("eps 列表为空")
        for eps in self.eps_list:
            if not 0 < eps <= 1:
                raise ValueError(f"eps 必须在 (0, 1] 内: {eps}")
        if self.seeds < 1:
            raise ValueError(f"seeds 必须 >= 1: {self.seeds}")

    def log(self, message: str):
        if not self.quiet:
            print(message)


@dataclass
class Workload:
    """实验输入: 分布式数据集 + 对应的数据流"""

    dataset: Dataset
    stream: np.ndarray
    universe_size: int


def parse_eps_pows(text: str) -> List[float]:
    """'a..b' → [2^-a, ..., 2^-b]；也接受单个整数"""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise ValueError(f"--eps-pows 格式应为 a..b: {text!r}")
    if lo < 0 or hi < lo:
        raise ValueError(f"--eps-pows 需要 0 <= a <= b: {text!r}")
    return [2.0 ** -p for p in range(lo, hi + 1)]


def baseline_bits(alpha: int, eps: float, n: int, c0: float = BASELINE_C0) -> float:
    """标准协议的通信量 α·(c0/ε² + c0·log2 n)"""
    return alpha * (c0 / eps ** 2 + c0 * math.log2(max(n, 2)))


def build_workload(cfg: ExperimentConfig) -> Workload:
    """按配置生成或读取负载；负载种子固定为 seed0，协议种子随 seed 变化"""
    w = cfg.workload
    kind = w.get("kind", "planted")
    n = int(w.get("n", 10 ** 6))

    if kind == "zipf":
        spec = ZipfSpec(
            float(w.get("zipf_s", 1.5)),
            float(w.get("zipf_scale", 16.0)),
            int(w.get("support", 10 ** 4)),
            cfg.seed0,
        )
        d = gen_zipfian_dataset(spec, int(w.get("alpha", 16)), n)
    elif kind == "planted":
        spec = PlantedSpec(
            int(w.get("f0", 10 ** 4)),
            int(w.get("collisions", 0)),
            int(w.get("alpha", 8)),
            cfg.seed0,
        )
        d = gen_planted(spec, n)
    elif kind == "file":
        path = w.get("path")
        if not path:
            raise ValueError("file 负载需要 --edges 或 --dataset 路径")
        if str(path).endswith(".csv"):
            d = partition_by_receiver(load_edges(path))
        else:
            d = load_dataset(path)
    else:
        raise ValueError(f"未知负载类型: {kind}")

    if cfg.stream_file:
        stream = load_stream(cfg.stream_file, cfg.stream_format)
        universe = max(d.universe_size, int(stream.max()) + 1 if stream.size else 1)
    else:
        stream = dataset_to_stream(d, seed=cfg.seed0)
        universe = d.universe_size
    return Workload(dataset=d, stream=stream, universe_size=universe)


def resolve_budget(cfg: ExperimentConfig, work: Workload) -> int:
    """未指定时 C 取真实值（分布式: 成对碰撞数；数据流: 频率大于 1 的 id 数）"""
    if cfg.c_budget is not None:
        return cfg.c_budget
    if cfg.protocol in STREAMING:
        return stream_stats(work.stream)["heavy_count"]
    return pairwise_collisions_exact(work.dataset)


def true_value(cfg: ExperimentConfig, work: Workload) -> int:
    if cfg.protocol == "dup":
        return duplicate_count_exact(work.dataset)
    if cfg.protocol in STREAMING:
        return stream_stats(work.stream)["f0"]
    return f0_exact(work.dataset)


def _tau(constants: ProtocolConstants, n: int) -> int:
    loglog = math.log2(math.log2(max(n, 2)) + 2)
    return max(constants.tau_min, math.ceil(constants.tau_loglog_factor * loglog))


def run_single(
    cfg: ExperimentConfig, work: Workload, eps: float, seed: int, c_budget: int
) -> Tuple[float, int, int]:
    """跑一次协议，返回 (estimate, bits, rounds)"""
    k = cfg.constants
    proto = cfg.protocol

    if proto in DISTRIBUTED:
        net = SimNetwork.from_dataset(work.dataset, seed=seed)
        tau = _tau(k, work.dataset.universe_size)
        if proto == "const4":
            res = constant_factor_f0(net, tau=tau)
        elif proto == "alg1":
            res = eps_approx_f0(net, eps, oversample=k.oversample, tau=tau)
        elif proto == "alg2":
            res = collision_bounded_f0(net, eps, c_budget, oversample=k.oversample, tau=tau)
        else:
            res = duplication_estimate(
                net,
                eps,
                max(1, c_budget),
                xi=k.dup_xi,
                max_iters=k.dup_max_iters,
                p_constant=k.dup_p_constant,
            )
        return res.estimate, res.bits_used, res.rounds

    if proto == "stream1p":
        est = run_one_pass_auto(
            work.stream,
            eps,
            c_budget,
            seed=seed,
            universe_size=work.universe_size,
            tau=_tau(k, work.universe_size),
            sample_constant=k.robust_sample_constant,
            trim_floor=k.robust_trim_floor,
        )
        return est.estimate, est.space_bits, 1

    variant = "large" if proto == "stream2p" else "small"
    level_cfg = level_set_config(
        eps,
        work.universe_size,
        c_budget,
        variant=variant,
        rule=k.level_rule,
        polylog_power=k.stream_polylog_power,
        rows_factor=k.stream_rows_factor,
        threshold_constant=k.stream_threshold_constant,
    )
    est = run_two_pass(work.stream, work.stream, level_cfg, seed=seed)
    return est.estimate, est.space_bits, 2


def _rel_err(estimate: float, truth: int) -> float:
    if truth == 0:
        return 0.0 if estimate == 0 else math.inf
    return abs(estimate - truth) / truth


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def collect_rows(cfg: ExperimentConfig, work: Optional[Workload] = None) -> List[Dict]:
    """对每个 (eps, seed) 跑一次；行按 (eps, seed) 排序，与并行度无关"""
    work = work or build_workload(cfg)
    c_budget = resolve_budget(cfg, work)
    truth = true_value(cfg, work)
    tasks = [(eps, cfg.seed0 + k) for eps in cfg.eps_list for k in range(cfg.seeds)]

    cfg.log(f"[INFO] 协议: {cfg.protocol}  任务数: {len(tasks)}  C={c_budget}  真值={truth}")

    def job(task):
        eps, seed = task
        estimate, bits, rounds = run_single(cfg, work, eps, seed, c_budget)
        return {
            "protocol": cfg.protocol,
            "eps": eps,
            "c_budget": c_budget,
            "seed": seed,
            "estimate": float(estimate),
            "f0_true": truth,
            "rel_err": _rel_err(float(estimate), truth),
            "bits": int(bits),
            "rounds": int(rounds),
        }

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(job, tasks))
    else:
        rows = [job(t) for t in tasks]

    rows.sort(key=lambda r: (r["eps"], r["seed"]))
    return rows


def write_csv(rows: List[Dict], columns: List[str], path: str, comments: List[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in comments:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def _default_out(cfg: ExperimentConfig, mode: str) -> str:
    return cfg.out or f"results/{mode}_{cfg.protocol}.csv"


def run_comm_vs_eps(cfg: ExperimentConfig, work: Optional[Workload] = None) -> Path:
    """每个 (eps, seed) 一行: 实测 bits 与基线 α·(1/ε² + log2 n)"""
    work = work or build_workload(cfg)
    rows = collect_rows(cfg, work)
    alpha = work.dataset.alpha
    for row in rows:
        row["baseline_bits"] = baseline_bits(alpha, row["eps"], work.universe_size)

    path = write_csv(
        rows,
        COLUMNS + ["baseline_bits"],
        _default_out(cfg, "comm"),
        [f"schema=comm-v{SCHEMA_VERSION}", f"baseline=alpha*(c0/eps^2+c0*log2(n)) c0={BASELINE_C0:g}"],
    )
    cfg.log(f"[OK] 已写入 {len(rows)} 行: {path}")
    return path


def summarize(rows: List[Dict]) -> List[Dict]:
    """每个 eps 一行中位数汇总"""
    summary = []
    for eps in sorted({r["eps"] for r in rows}):
        group = [r for r in rows if r["eps"] == eps]
        summary.append(
            {
                "protocol": group[0]["protocol"],
                "eps": eps,
                "c_budget": group[0]["c_budget"],
                "seed": "median",
                "estimate": float(np.median([r["estimate"] for r in group])),
                "f0_true": group[0]["f0_true"],
                "rel_err": float(np.median([r["rel_err"] for r in group])),
                "bits": float(np.median([r["bits"] for r in group])),
                "rounds": float(np.median([r["rounds"] for r in group])),
            }
        )
    return summary


def run_accuracy_vs_eps(cfg: ExperimentConfig, work: Optional[Workload] = None) -> Path:
    """数据行之后追加每个 eps 的中位数汇总行（seed 列为 median）"""
    rows = collect_rows(cfg, work)
    summary = summarize(rows)
    path = write_csv(
        rows + summary,
        COLUMNS,
        _default_out(cfg, "accuracy"),
        [f"schema=accuracy-v{SCHEMA_VERSION}", "rel_err=|estimate-f0_true|/f0_true"],
    )

    cfg.log(f"[OK] 已写入 {len(rows)} 行 + {len(summary)} 行汇总: {path}")
    for s in summary:
        cfg.log(f"     eps={s['eps']:.6g}  median rel_err={s['rel_err']:.4f}")
    return path


def run_histograms(cfg: ExperimentConfig) -> Path:
    """对边列表文件提取两种直方图并拟合 Zipf 参数"""
    from analyze_edges import EdgeHistogramAnalyzer

    w = cfg.workload
    if w.get("kind") != "file" or not w.get("path"):
        raise ValueError("histograms 模式需要 --workload file 与 --edges 路径")

    out = Path(cfg.out or "results/histograms.csv")
    analyzer = EdgeHistogramAnalyzer(output_dir=str(out.parent))
    result = analyzer.analyze(w["path"])

    rows = [
        {"histogram": "senders_per_receiver", **result["receiver_fit"], "file": result["outputs"][0]},
        {"histogram": "sender_activity", **result["activity_fit"], "file": result["outputs"][1]},
    ]
    path = write_csv(
        rows,
        ["histogram", "s", "c_z", "file"],
        str(out),
        [f"schema=histograms-v{SCHEMA_VERSION}", f"distinct_senders={result['distinct_senders']}"],
    )
    cfg.log(f"[OK] 拟合结果: {path}")
    return path


MODES = {
    "comm": run_comm_vs_eps,
    "accuracy": run_accuracy_vs_eps,
    "histograms": run_histograms,
}


def build_config(args, presets: ExperimentPresetManager) -> ExperimentConfig:
    """预设 < 命令行参数"""
    workload = dict(presets.get_workload(args.workload) or {"kind": args.workload})
    overrides = {
        "n": args.n,
        "alpha": args.alpha,
        "zipf_s": args.zipf_s,
        "zipf_scale": args.zipf_scale,
        "support": args.support,
        "f0": args.f0,
        "collisions": args.collisions,
        "path": args.edges or args.dataset,
    }
    workload.update({k: v for k, v in overrides.items() if v is not None})

    return ExperimentConfig(
        protocol=args.protocol,
        eps_list=parse_eps_pows(args.eps_pows),
        seeds=args.seeds,
        seed0=args.seed,
        workload=workload,
        out=args.out,
        stream_file=args.stream_file,
        stream_format=args.format,
        c_budget=args.c_budget,
        workers=args.workers,
        constants=presets.get_constants(args.preset),
        quiet=args.quiet,
    )


def main():
    import argparse

    parser = argparse.ArgumentParser(description="F0 估计批量实验")
    parser.add_argument("--mode", choices=sorted(MODES), default="comm", help="实验类型")
    parser.add_argument("--protocol", choices=PROTOCOL_CHOICES, default="alg1")
    parser.add_argument("--eps-pows", default="0..6", help="ε = 2^-p，p 取 a..b")
    parser.add_argument("--seeds", type=int, default=5, help="每个 ε 的重复次数")
    parser.add_argument("--seed", type=int, default=0, help="起始种子（同时是负载种子）")
    parser.add_argument("--workload", default="planted", help="zipf / planted / file 或预设名")
    parser.add_argument("--out", "-o", help="输出 CSV 路径")
    parser.add_argument("--format", choices=["lines", "binary"], default="lines", help="数据流文件格式")
    parser.add_argument("--stream-file", help="数据流文件（流式协议使用）")
    parser.add_argument("--c-budget", type=int, help="碰撞预算 C，默认取真实值")
    parser.add_argument("--workers", type=int, default=1, help="并行线程数")
    parser.add_argument("--preset", default="default", help="协议常数预设名")
    parser.add_argument("--config", "-c", help="预设配置文件路径")
    parser.add_argument("--quiet", "-q", action="store_true", help="不打印进度")

    group = parser.add_argument_group("负载参数")
    group.add_argument("--n", type=int, help="universe 大小")
    group.add_argument("--alpha", type=int, help="player 数")
    group.add_argument("--zipf-s", type=float)
    group.add_argument("--zipf-scale", type=float)
    group.add_argument("--support", type=int, help="Zipf 支撑集大小")
    group.add_argument("--f0", type=int, help="planted F0")
    group.add_argument("--collisions", type=int, help="planted 碰撞数")
    group.add_argument("--edges", help="边列表 CSV（file 负载）")
    group.add_argument("--dataset", help="数据集文本文件（file 负载）")

    args = parser.parse_args()

    try:
        presets = ExperimentPresetManager(args.config)
        cfg = build_config(args, presets)

        cfg.log("=" * 60)
        cfg.log(f"[INFO] 实验: {args.mode}  协议: {cfg.protocol}  负载: {cfg.workload.get('kind')}")
        cfg.log("=" * 60)

        MODES[args.mode](cfg)
    except (F0Error, OSError, ValueError, yaml.YAMLError) as e:
        print(f"[ERROR] {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
