#!/usr/bin/env python3
"""Run the onboarding walkthrough end to end in a scratch directory.

Creates a fresh world, replays scripts/partly_cloudy.txt, and leaves the
state file plus transcript behind for inspection.
"""

import sys
import tempfile
from pathlib import Path

from mirrorplane.cli import main

SCRIPTS = Path(__file__).resolve().parent


def run() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="mirrorplane-"))
    state = workdir / "world.json"
    transcript = workdir / "transcript.json"
    steps = [
        ["--state", str(state), "init", "--seed", "42"],
        [
            "--state", str(state),
            "scenario", "run", str(SCRIPTS / "partly_cloudy.txt"),
            "--strict", "--transcript", str(transcript),
        ],
        ["--state", str(state), "verify", "--converged"],
        ["--state", str(state), "audit", "tail", "-n", "12"],
    ]
    for argv in steps:
        print(f"$ mirrorplane {' '.join(argv)}")
        code = main(argv)
        if code != 0:
            print(f"command failed with exit code {code}", file=sys.stderr)
            return code
    print(f"\nstate:      {state}")
    print(f"transcript: {transcript}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
