"""membrane-plots: batch-render report CSVs into figures.

The jobs file uses the same flat ``key = value`` text format as the lab
configs; one job per block, blocks separated by blank lines::

    kind = width-decay
    input = out/clog-width/width.csv
    output = figs/width.png

    kind = profiles-1d
    input = out/u1.csv, out/u2.csv, out/u3.csv
    output = figs/profiles.png

``contact-map`` jobs accept an optional ``overlay = <gamma csv>`` key.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FigureJob, JobError, render_figures


def parse_jobs(path) -> list:
    text = Path(path).read_text()
    jobs = []
    block: dict = {}

    def flush():
        if not block:
            return
        if "kind" not in block or "input" not in block or "output" not in block:
            raise JobError(f"{path}: each job needs kind, input and output keys")
        inputs = [s.strip() for s in block["input"].split(",") if s.strip()]
        jobs.append(
            FigureJob(
                kind=block["kind"],
                inputs=inputs,
                output=block["output"],
                overlay=block.get("overlay"),
            )
        )
        block.clear()

    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            flush()
            continue
        if "=" not in stripped:
            raise JobError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = stripped.partition("=")
        block[key.strip()] = val.strip()
    flush()
    if not jobs:
        raise JobError(f"{path}: no jobs found")
    return jobs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="membrane-plots",
        description="Render membrane-lab CSV reports into figures.",
    )
    parser.add_argument("jobs_file", help="flat key = value jobs file")
    args = parser.parse_args(argv)
    try:
        jobs = parse_jobs(args.jobs_file)
        paths = render_figures(jobs)
    except (JobError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
