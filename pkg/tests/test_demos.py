import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parent.parent / "demos"


@pytest.mark.parametrize("script,args", [
    ("fit_round_trip.py", ["--trials", "1"]),
    ("consistency_check.py", ["--count", "2", "--resolution", "128"]),
    ("toy_pipeline.py", ["--count", "5", "--resolution", "96"]),
])
def test_demo_runs(script, args, tmp_path):
    if script == "toy_pipeline.py":
        args = args + ["--out", str(tmp_path)]
    out = subprocess.run([sys.executable, str(DEMOS / script), *args], capture_output=True, text=True,
                         timeout=300)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip()
