#!/usr/bin/env python3
"""
实验预设管理
管理协议常数（oversample、τ、采样常数等）与负载预设
"""

import yaml
from pathlib import Path
from typing import Dict, List, Optional
from dataclasses import dataclass, asdict, fields


@dataclass
class ProtocolConstants:
    """协议与流式估计使用的常数"""

    oversample: float = 1000.0
    tau_min: int = 32
    tau_loglog_factor: int = 8
    dup_p_constant: float = 1.0
    dup_xi: float = 8.0
    dup_max_iters: int = 64
    stream_polylog_power: float = 3.0
    stream_rows_factor: float = 4.0
    stream_threshold_constant: float = 100.0
    robust_sample_constant: float = 100.0
    robust_trim_floor: float = 0.05
    level_rule: str = "consistent"

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> "ProtocolConstants":
        """忽略未知键，缺失的键取默认值"""
        data = data or {}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            print(f"[WARN] 忽略未知的协议常数: {', '.join(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> Dict:
        return asdict(self)


class ExperimentPresetManager:
    """实验预设管理器"""

    def __init__(self, config_path: str = None):
        """
        Args:
            config_path: 预设配置文件路径
        """
        if config_path is None:
            # 默认路径
            repo_dir = Path(__file__).parent.parent
            config_path = repo_dir / "config" / "experiment_presets.yaml"

        self.config_path = Path(config_path)
        self.protocols: Dict[str, Dict] = {}
        self.workloads: Dict[str, Dict] = {}
        self.load_presets()

    def load_presets(self):
        """加载所有预设"""
        if not self.config_path.exists():
            print(f"[WARN] 预设文件不存在: {self.config_path}")
            print("   将使用默认预设")
            self._use_defaults()
            return

        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
            self.protocols = data.get("protocols", {}) or {}
            self.workloads = data.get("workloads", {}) or {}
        except (OSError, yaml.YAMLError) as e:
            print(f"[WARN] 加载预设失败: {e}")
            self._use_defaults()
            return

        if "default" not in self.protocols:
            self.protocols["default"] = ProtocolConstants().to_dict()

    def _use_defaults(self):
        defaults = self._get_default_presets()
        self.protocols = defaults["protocols"]
        self.workloads = defaults["workloads"]

    def _get_default_presets(self) -> Dict:
        """内置默认预设"""
        return {
            "protocols": {"default": ProtocolConstants().to_dict()},
            "workloads": {
                "zipf": {
                    "kind": "zipf",
                    "n": 10 ** 6,
                    "alpha": 16,
                    "zipf_s": 1.5,
                    "zipf_scale": 16.0,
                    "support": 10 ** 4,
                },
                "planted": {
                    "kind": "planted",
                    "n": 10 ** 6,
                    "alpha": 8,
                    "f0": 10 ** 4,
                    "collisions": 500,
                },
            },
        }

    @staticmethod
    def _lookup(table: Dict[str, Dict], name: str) -> Optional[Dict]:
        # 尝试精确匹配
        if name in table:
            return table[name]

        # 尝试不区分大小写匹配
        for key, preset in table.items():
            if key.lower() == name.lower():
                return preset

        return None

    def get_constants(self, name: str = "default") -> ProtocolConstants:
        """按名称取协议常数；不存在时返回默认值"""
        preset = self._lookup(self.protocols, name)
        if preset is None:
            print(f"[WARN] 未找到协议预设 '{name}'，使用默认常数")
            return ProtocolConstants()
        return ProtocolConstants.from_dict(preset)

    def get_workload(self, name: str) -> Optional[Dict]:
        return self._lookup(self.workloads, name)

    def list_presets(self) -> List[str]:
        """列出所有预设名称（protocols/<name>、workloads/<name>）"""
        return [f"protocols/{k}" for k in self.protocols] + [
            f"workloads/{k}" for k in self.workloads
        ]

    def save_presets(self):
        """保存所有预设到文件"""
        # 确保目录存在
        self.config_path.parent.mkdir(parents=True, exist_ok=True)

        data = {"protocols": self.protocols, "workloads": self.workloads}
        with open(self.config_path, "w", encoding="utf-8") as f:
            yaml.dump(data, f, allow_unicode=True, sort_keys=False)

        print(f"[OK] 预设已保存: {self.config_path}")

    def display_preset(self, name: str):
        """展示预设内容"""
        preset = self._lookup(self.protocols, name)
        kind = "协议常数"
        if preset is None:
            preset = self._lookup(self.workloads, name)
            kind = "负载"

        if preset is None:
            print(f"[ERROR] 未找到预设: {name}")
            return

        print("\n" + "=" * 60)
        print(f"{kind}: {name}")
        print("=" * 60)
        for key, value in preset.items():
            print(f"  {key}: {value}")


def main():
    import argparse

    parser = argparse.ArgumentParser(description="实验预设管理")
    parser.add_argument("--config", "-c", help="预设配置文件路径")
    parser.add_argument("--list", "-l", action="store_true", help="列出所有预设")
    parser.add_argument("--show", "-s", help="展示指定预设")
    parser.add_argument("--init", action="store_true", help="把当前预设写回配置文件")

    args = parser.parse_args()

    manager = ExperimentPresetManager(args.config)

    if args.list:
        presets = manager.list_presets()
        print(f"\n已加载 {len(presets)} 个预设:")
        for i, name in enumerate(presets, 1):
            print(f"  {i}. {name}")

    elif args.show:
        manager.display_preset(args.show)

    elif args.init:
        manager.save_presets()

    else:
        parser.print_help()


if __name__ == "__main__":
    main()
