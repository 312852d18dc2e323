import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_kernels.py"


def test_benchmark_runs_and_backends_agree():
    res = subprocess.run([sys.executable, str(BENCH), "--repeat", "1", "--points", "200", "--grid", "9"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0, res.stderr
    assert "assemble_banded" in res.stdout and "solve" in res.stdout
    for line in res.stdout.splitlines():
        if line.startswith("max |python - cython|"):
            assert all(float(t) <= 1e-12 for t in line.split(":")[1].split(","))
