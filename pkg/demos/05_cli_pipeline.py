# The same pipeline through the command line, in a scratch directory.
import json
import tempfile
from pathlib import Path

from sghp.cli import main

out = Path(tempfile.mkdtemp(prefix="sghp-demo-"))
data = str(out / "dataset.jsonl")
steps = [
    ["simulate", "--spec", "appendix-a", "--n", "60", "--horizon", "44", "--seed", "5"],
    ["train", "--data", data, "--seed", "5", "--epochs", "3", "--dim", "8"],
    ["evaluate", "--data", data, "--checkpoint", str(out / "checkpoint.json"), "--truth", "appendix-a",
     "--seed", "5"],
    ["export-kernels", "--checkpoint", str(out / "checkpoint.json"), "--truth", "appendix-a",
     "--pairs", "1,1", "--normalize"],
    ["validate", "--data", data],
]
for argv in steps:
    print("$ sghp", " ".join(argv))
    assert main([*argv, "--out", str(out)]) == 0

print(json.dumps({k: v for k, v in json.loads((out / "metrics.json").read_text()).items()
                  if k != "recovery"}, indent=2))
print((out / "kernel_1_1.csv").read_text().splitlines()[:4])
print("outputs in", out)
