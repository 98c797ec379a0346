import numpy as np
import pytest
from hypothesis import settings

from zslfeedback.dataset import SynthConfig, synth_generate

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_ds():
    """A quick synthetic dataset: 6 seen / 3 unseen classes of 30 rows."""
    return synth_generate(SynthConfig(D=6, d_x=16, n_seen=6, n_unseen=3, per_class=30,
                                      sigma_x=0.3, seed=5))


def run_cli(*argv):
    from zslfeedback.cli import main

    return main([str(a) for a in argv])


BENCH_COMMANDS = ("synth", "train", "generate", "eval", "gzsl", "report", "gradcheck")


def run_benchmark(out, name="bench"):
    """Run every command on the default synthetic benchmark; returns wall
    times and the report written by each evaluation mode."""
    import json
    import time

    times, reports = {}, {}
    for cmd in BENCH_COMMANDS:
        start = time.perf_counter()
        assert run_cli(cmd, "--out", out, "--name", name) == 0, cmd
        times[cmd] = time.perf_counter() - start
        if cmd in ("eval", "gzsl"):
            reports[cmd] = json.loads((out / name / "report.json").read_text())
    return times, reports


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    """The default synthetic benchmark run end to end through the CLI:
    synth, train (50 epochs), generate, eval (zsl), gzsl, report and
    gradcheck, all with the default seed."""
    out = tmp_path_factory.mktemp("bench")
    times, reports = run_benchmark(out)
    return {"out": out, "dir": out / "bench", "times": times, "zsl": reports["eval"],
            "gzsl": reports["gzsl"]}
