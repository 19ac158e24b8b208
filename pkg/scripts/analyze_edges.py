#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
分析边列表（sender,receiver）的度分布，并拟合 Zipf 参数
"""

import json
from pathlib import Path
from typing import Dict, List, Optional
from collections import Counter

from workloads import (
    EdgeRecord,
    DegenerateInput,
    fit_zipf,
    load_edges,
    partition_by_receiver,
    write_histogram_csv,
)
from core_model import f0_exact


class EdgeHistogramAnalyzer:
    """边列表直方图分析器"""

    def __init__(self, output_dir: Optional[str] = None):
        """
        Args:
            output_dir: CSV 输出目录，默认与输入文件同目录
        """
        self.output_dir = Path(output_dir) if output_dir else None

    def senders_per_receiver(self, edges: List[EdgeRecord]) -> List[int]:
        """每个 receiver 的不同 sender 数（降序）"""
        d = partition_by_receiver(edges)
        return sorted((len(s) for s in d.shards), reverse=True)

    def busiest_receiver(self, edges: List[EdgeRecord]) -> str:
        """边数最多的 receiver；并列时取先出现的"""
        counts = Counter(e.receiver for e in edges)
        return max(counts, key=lambda r: counts[r])

    def sender_activity(self, edges: List[EdgeRecord], receiver: str) -> List[int]:
        """指定 receiver 上每个 sender 的交互次数（降序，重复边计入）"""
        counts = Counter(e.sender for e in edges if e.receiver == receiver)
        return sorted(counts.values(), reverse=True)

    def _fit(self, histogram: List[int]) -> Dict:
        try:
            s, c_z = fit_zipf(histogram)
            return {"s": s, "c_z": c_z}
        except DegenerateInput as e:
            print(f"[WARN] 无法拟合: {e}")
            return {"s": None, "c_z": None}

    def analyze(self, edge_path: str) -> Dict:
        """
        完整分析流程

        Returns:
            {
                'edges': int,
                'distinct_senders': int,
                'receivers': int,
                'receiver_fit': {'s': float, 'c_z': float},
                'busiest_receiver': str,
                'activity_fit': {'s': float, 'c_z': float},
                'outputs': [str]
            }
        """
        edge_path = Path(edge_path)
        print(f"[INFO] 分析边列表: {edge_path.name}")

        edges = load_edges(str(edge_path))
        dataset = partition_by_receiver(edges)
        print(f"   边数: {len(edges)}  receiver: {dataset.alpha}  sender: {f0_exact(dataset)}")

        per_receiver = self.senders_per_receiver(edges)
        busiest = self.busiest_receiver(edges)
        activity = self.sender_activity(edges, busiest)

        out_dir = self.output_dir or edge_path.parent
        stem = edge_path.stem
        receiver_csv = write_histogram_csv(
            per_receiver, out_dir / f"{stem}.senders_per_receiver.csv", "unique senders per receiver"
        )
        activity_csv = write_histogram_csv(
            activity, out_dir / f"{stem}.sender_activity.csv", f"activity per sender at receiver {busiest}"
        )

        result = {
            "edges": len(edges),
            "distinct_senders": f0_exact(dataset),
            "receivers": dataset.alpha,
            "receiver_fit": self._fit(per_receiver),
            "busiest_receiver": busiest,
            "activity_fit": self._fit(activity),
            "outputs": [str(receiver_csv), str(activity_csv)],
        }

        summary_path = out_dir / f"{stem}.edge_analysis.json"
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(result, f, ensure_ascii=False, indent=2)

        fit = result["receiver_fit"]
        if fit["s"] is not None:
            print(f"\n[FIT] receiver 分布: s={fit['s']:.3f}  C={fit['c_z']:.2f}")
        fit = result["activity_fit"]
        if fit["s"] is not None:
            print(f"[FIT] 最活跃 receiver ({busiest}) 的 sender 分布: s={fit['s']:.3f}  C={fit['c_z']:.2f}")

        return result


def main():
    import argparse

    from core_model import F0Error

    parser = argparse.ArgumentParser(description="分析边列表的度分布")
    parser.add_argument("edge_file", help="两列 CSV 文件路径（sender,receiver）")
    parser.add_argument("--output-dir", "-o", help="CSV 输出目录")

    args = parser.parse_args()

    analyzer = EdgeHistogramAnalyzer(output_dir=args.output_dir)
    try:
        analyzer.analyze(args.edge_file)
    except (F0Error, OSError) as e:
        print(f"[ERROR] {e}")
        raise SystemExit(1)

    print(f"\n[OK] 分析完成! 结果已保存")


if __name__ == "__main__":
    main()
