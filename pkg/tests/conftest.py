"""Shared fixtures and random-shape generators."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from sweptplan.geom import Ball, Ellipsoid, Hull, Inflated, Point, Polytope

DATA = Path(__file__).resolve().parents[1] / "src" / "sweptplan" / "data"
CAR = Polytope([[2.5, 1.0], [-2.5, 1.0], [-2.5, -1.0], [2.5, -1.0]])


@pytest.fixture
def data_dir():
    return DATA


def random_polytope(rng, k=None, scale=2.0, center=(0.0, 0.0)):
    k = k or int(rng.integers(1, 8))
    return Polytope(rng.normal(size=(k, 2)) * scale + np.asarray(center))


def random_ellipsoid(rng, scale=2.0):
    M = rng.normal(size=(2, 2)) * scale
    return Ellipsoid(M @ M.T + 0.1 * np.eye(2))


def random_shape(rng):
    """Any supported shape, including one level of hull."""
    kind = int(rng.integers(0, 6))
    if kind == 0:
        return Point(rng.normal(size=2))
    if kind == 1:
        return random_polytope(rng)
    if kind == 2:
        return random_ellipsoid(rng)
    if kind == 3:
        return Ball(float(rng.uniform(0, 3)))
    if kind == 4:
        return Inflated(random_polytope(rng), float(rng.uniform(0, 2)))
    return Hull((random_polytope(rng), random_ellipsoid(rng)))


def random_unit(rng, n=None):
    th = rng.uniform(0, 2 * np.pi, n)
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


seeds = st.integers(min_value=0, max_value=2**32 - 1)
finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
angles = st.floats(min_value=-np.pi, max_value=np.pi, allow_nan=False)
directions = st.tuples(finite, finite).filter(lambda c: np.hypot(*c) > 1e-3)


# -- shipped-scenario runs ----------------------------------------------------------
#
# Every shipped scenario is planned twice through the command line, once per
# mode. Transcription, CLI and acceptance tests all read these artifacts, so
# the expensive solves happen once per session.

SCENARIOS = ("free", "thin_wall", "wide_obstacle")
MODES = ("discrete", "continuous")


def run_cli(*args, env=None, timeout=600):
    import os
    import subprocess
    import sys
    import time
    full_env = dict(os.environ, **(env or {}))
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "sweptplan", *map(str, args)],
                          capture_output=True, text=True, env=full_env, timeout=timeout)
    return proc, time.perf_counter() - t0


@pytest.fixture(scope="session")
def shipped_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for rep in (1, 2):
        for name in SCENARIOS:
            for mode in MODES:
                d = root / f"run{rep}" / f"{name}-{mode}"
                proc, secs = run_cli("plan", "--scenario", DATA / f"{name}.json", "--mode", mode, "--out", d)
                entry = out.setdefault((name, mode), {"dirs": [], "seconds": [], "exit": [], "stdout": []})
                entry["dirs"].append(d)
                entry["seconds"].append(secs)
                entry["exit"].append(proc.returncode)
                entry["stdout"].append(proc.stdout + proc.stderr)
    return out


def load_run(d):
    """Parsed artifacts of one plan run."""
    import json
    traj = json.loads((d / "trajectory.json").read_text())
    run = json.loads((d / "run.json").read_text())
    rows = np.loadtxt(d / "audit.csv", delimiter=",", skiprows=1, ndmin=2)
    return {"states": np.array(traj["states"]), "inputs": np.array(traj["inputs"]),
            "traj": traj, "run": run, "audit": rows}


# -- acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one acceptance verdict (several checks per criterion are ANDed)."""
    prev_ok, prev = ACCEPTANCE.get(criterion, (True, ""))
    ACCEPTANCE[criterion] = (prev_ok and ok, f"{prev}; {detail}" if prev else detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
