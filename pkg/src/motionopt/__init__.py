"""GRU human-motion prediction with goal-directed offset optimization."""
from motionopt.dataio import (
    ReachInfo,
    SyntheticConfig,
    generate_synthetic,
    load_checkpoint,
    read_trajectory_csv,
    save_checkpoint,
    write_trajectory_csv,
)
from motionopt.evaluation import ErrorTable, benchmark_table, build_eval_samples, key_joint_error
from motionopt.gru import Seq2SeqModel, backprop_params, gru_cell, init_model, rollout, vjp_delta
from motionopt.kinematics import Joint, Skeleton, default_skeleton, fk_jacobian, forward_kinematics
from motionopt.lbfgs import LbfgsConfig, lbfgs_minimize
from motionopt.statespace import Trajectory, extract_windows, wrap_diff, wraparound_loss
from motionopt.training import TrainConfig, train, train_step
from motionopt.trajopt import GoalConstraint, OptimizationResult, cost_V, grad_V, predict_optimized

__all__ = [
    "ErrorTable", "GoalConstraint", "Joint", "LbfgsConfig", "OptimizationResult", "ReachInfo", "Seq2SeqModel",
    "Skeleton", "SyntheticConfig", "TrainConfig", "Trajectory", "backprop_params", "benchmark_table",
    "build_eval_samples", "cost_V", "default_skeleton", "extract_windows", "fk_jacobian", "forward_kinematics",
    "generate_synthetic", "grad_V", "gru_cell", "init_model", "key_joint_error", "lbfgs_minimize",
    "load_checkpoint", "predict_optimized", "read_trajectory_csv", "rollout", "save_checkpoint", "train",
    "train_step", "vjp_delta", "wrap_diff", "wraparound_loss", "write_trajectory_csv",
]
