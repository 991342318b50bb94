from __future__ import annotations

from pathlib import Path

import pytest

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden():
    """Read a golden fixture by name."""

    def read(name: str) -> str:
        return (GOLDEN_DIR / name).read_text(encoding="utf-8")

    return read


def golden_text(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def demo_cassette(tmp_path_factory):
    """One shared recording of the scripted iris walkthrough."""
    from devloop.demo import record_demo_cassette

    base = tmp_path_factory.mktemp("shared-demo")
    cassette = base / "demo.jsonl"
    record_demo_cassette(cassette, base / "record")
    return cassette


@pytest.fixture(scope="session")
def bench_cassette(tmp_path_factory):
    """Recording of the iris task driven with the default scripted verdicts.

    Unlike the walkthrough cassette this one has no review edits and no
    failing feedback round, which is what a generic benchmark drive issues.
    """
    from devloop import bench
    from devloop.demo import demo_config, scripted_transport
    from devloop.gateway import ChatGateway, Mode

    base = tmp_path_factory.mktemp("shared-bench")
    cassette = base / "bench.jsonl"
    config = demo_config(cassette, Mode.RECORD)
    gateway = ChatGateway(config.backend, transport=scripted_transport)
    bench.drive_task(bench.load_tasks()[0], config, bench.ScriptedVerdicts(),
                     base / "record", "bench-record", gateway=gateway)
    return cassette
