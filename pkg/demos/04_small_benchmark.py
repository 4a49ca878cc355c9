"""A small seeded benchmark written to a resumable store.

Both methods see the same scenarios because the instance seed depends
only on the base seed, the rung and the index. The report is rebuilt from
the store on disk, so an interrupted run can be resumed and reported.
"""
import sys
import tempfile
from pathlib import Path

from activeplan.bench import BatchConfig, report_from_store, run_batch

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="activeplan-bench-"))
config = BatchConfig(model="point-mass-2d", ladder=(5, 10), per_rung=4, base_seed=3)


def progress(rec):
    print(f"  n_obs={rec['n_obs']:2d} #{rec['index']} {rec['method']:<9} {rec['status']:<15} "
          f"t_f={rec['t_f'] if rec['t_f'] is None else round(rec['t_f'], 4)}  {rec['wall_time']:.2f} s")


records = run_batch(config, out, progress=progress)
result = report_from_store(out)
print(f"\n{len(records)} records in {out}")
print(result["files"]["summary"].read_text())
print(result["files"]["histogram"].read_text())
