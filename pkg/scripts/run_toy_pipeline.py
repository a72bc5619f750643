#!/usr/bin/env python3
"""Drive the full CLI pipeline over the shipped toy federation.

Copies data/toy into a scratch directory, then runs stats, synopsis, link,
optimize, and execute, printing the plan shape, the result rows, and the
transfer metrics.
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def run(args: list[str], **kwargs) -> subprocess.CompletedProcess:
    printable = " ".join(str(a) for a in args)
    print(f"$ {printable}")
    proc = subprocess.run([sys.executable, "-m", "odyssey", *args], check=True, **kwargs)
    return proc


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="odyssey-toy-"))
    for name in ("dbp.nt", "lmdb.nt", "federation.json", "qf.rq"):
        shutil.copy(ROOT / "data" / "toy" / name, workdir / name)
    print(f"working in {workdir}\n")

    out = workdir / "out"
    run(["stats", str(workdir / "dbp.nt"), "--out", str(out / "dbp.stats.json"), "--dataset-id", "dbp"])
    run(["stats", str(workdir / "lmdb.nt"), "--out", str(out / "lmdb.stats.json"), "--dataset-id", "lmdb"])
    run(["synopsis", str(workdir / "dbp.nt"), "--out", str(out / "dbp.synopsis.json"), "--dataset-id", "dbp"])
    run(["synopsis", str(workdir / "lmdb.nt"), "--out", str(out / "lmdb.synopsis.json"), "--dataset-id", "lmdb"])
    run(["link", "--federation", str(workdir / "federation.json"), "--out", str(out / "federation.stats.json")])
    run([
        "optimize",
        str(workdir / "qf.rq"),
        "--federation",
        str(workdir / "federation.json"),
        "--links",
        str(out / "federation.stats.json"),
        "--out",
        str(out / "plan.json"),
        "--explain",
    ])

    plan = json.loads((out / "plan.json").read_text())
    print("\nplan: nsq =", plan["nsq"], "nss =", plan["nss"])
    for subquery in _remotes(plan["root"]):
        print(f"\nremote @ {subquery['endpoint']} (patterns {[p['tp'] for p in subquery['patterns']]}):")
        print(subquery["sparql"])

    print("\nresults:")
    run([
        "execute",
        str(out / "plan.json"),
        "--federation",
        str(workdir / "federation.json"),
        "--metrics",
        str(out / "metrics.json"),
    ])
    print("\nmetrics:", (out / "metrics.json").read_text().strip())


def _remotes(node):
    if node is None:
        return
    if node["type"] == "remote":
        yield node
    for child in node.get("children", []):
        yield from _remotes(child)
    if "left" in node:
        yield from _remotes(node["left"])
        yield from _remotes(node["right"])


if __name__ == "__main__":
    main()
