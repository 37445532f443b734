"""Full desk-scale benchmark: 30 training reaches, 10 test reaches, hidden 128.

Run: python3 demos/benchmark_table.py [out_dir]   (about 5 minutes on one CPU)
Prints the error table and writes table.csv and table.svg.
"""
import sys
from pathlib import Path

from motionopt.benchmark import run_benchmark
from motionopt.dataio import atomic_write_text
from motionopt.kinematics import default_skeleton
from motionopt.plotting import error_table_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "benchmark_out")
out.mkdir(parents=True, exist_ok=True)
run = run_benchmark(default_skeleton(), seed=0,
                    on_epoch=lambda e, l: print(f"epoch {e:3d}  loss {l:.5f}") if e % 20 == 0 else None)
print(f"training {run.train_seconds:.0f} s, evaluation {run.eval_seconds:.1f} s")
print(run.table.to_text(3), end="")
atomic_write_text(out / "table.csv", run.table.to_csv())
atomic_write_text(out / "table.svg", error_table_svg(run.table))
print(f"wrote {out / 'table.csv'} and {out / 'table.svg'}")
