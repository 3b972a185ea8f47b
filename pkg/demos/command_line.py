"""
The stocheck command line
=========================

Writes a system file, then runs a few analyses through the same entry point
as the ``stocheck`` console script.  Each report is JSON carrying the input's
sha256 and the arguments used.
"""

import json
import tempfile
from pathlib import Path

from stocheck.cli import main
from stocheck.fixtures import period_three_noise
from stocheck.system import dump_system

tmp = Path(tempfile.mkdtemp())
path = tmp / "period3.json"
dump_system(period_three_noise(), path)
print(path.read_text())

runs = [
    ["detect", str(path), "--notion", "kN", "--N", "3", "--mode", "periodic"],
    ["stability", str(path), "--method", "monodromy"],
    ["gramian", str(path), "--kind", "observability", "--k", "0", "--l", "2"],
]
for argv in runs:
    out = tmp / "report.json"
    code = main(["-o", str(out)] + argv)
    report = json.loads(out.read_text())
    print(f"$ stocheck {' '.join(argv[:1] + argv[2:])}  -> exit {code}")
    print(json.dumps(report["results"][0]["result"], indent=1)[:400], "\n")

# the limit iteration diverges on this unstable system: numerical failure, exit 4
code = main(["-o", str(tmp / "err.json"), "gle", str(path), "--mode", "limit", "--T-max", "5"])
print("gle limit on an unstable system, exit code", code)
print(json.loads((tmp / "err.json").read_text())["error"]["message"])
