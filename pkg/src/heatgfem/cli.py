"""
命令行入口

heatgfem --experiment ex3_1 --mode svd --out results
"""

from typing import List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError

from .core.exceptions import HeatGFEMError
from .core.experiments import ExperimentRunner
from .tools.config_loader import ExperimentConfig, load_config, load_experiment_config
from .tools.log_setup import setup_logging

logger = logging.getLogger("heatgfem.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatgfem", description="热方程最优局部时空逼近空间实验")
    parser.add_argument("--experiment", choices=("ex1", "ex2", "ex3_1", "ex3_2", "ex4", "custom"),
                        help="实验编号")
    parser.add_argument("--config", help="覆盖实验参数的 JSON 文件")
    parser.add_argument("--defaults", help="替换 config/default.yaml 的 YAML 文件")
    parser.add_argument("--mode", choices=("svd", "randomized"), help="局部基构造方式")
    parser.add_argument("--tol", type=float,
                        help="局部研究为值域算法容差，全局研究为全局相对误差容差")
    parser.add_argument("--seed", type=int, help="主随机种子")
    parser.add_argument("--seeds", type=int, help="统计所用的种子个数")
    parser.add_argument("--out", help="输出目录")
    scale = parser.add_mutually_exclusive_group()
    scale.add_argument("--paper-scale", action="store_true", help="使用原始规模预设")
    scale.add_argument("--coarse", action="store_true", help="使用粗网格预设")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """运行实验；全部检验通过时返回 0"""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.defaults)
        setup_logging(config.get("logging", {}))
        scale = "paper" if args.paper_scale else "coarse" if args.coarse else None
        experiment = load_experiment_config(
            args.config, experiment=args.experiment, mode=args.mode, seed=args.seed, seeds=args.seeds,
            output_dir=args.out, scale=scale,
        )
        if args.tol is not None:
            field = "tol" if experiment.is_local else "global_tol"
            experiment = ExperimentConfig(**dict(experiment.model_dump(), **{field: args.tol}))
        result = ExperimentRunner(config, experiment).run()
    except (HeatGFEMError, ValidationError) as e:
        logger.error(f"Experiment failed: {e}")
        return 1

    for name, ok in result.checks.items():
        logger.info(f"check {name}: {'pass' if ok else 'FAIL'}")
    logger.info(f"Outputs written to {result.output_dir}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
