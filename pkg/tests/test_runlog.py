import json

import pytest

from acvbench.bench.fixtures import FIXTURES, fixture_path
from acvbench.bench.runlog import parse_runlog, read_runlog, replay
from acvbench.errors import CorruptLog


@pytest.mark.parametrize("fx", FIXTURES, ids=[f.category for f in FIXTURES])
def test_fixture_replays_identically(fx):
    result = replay(fixture_path(fx.category))
    assert result.identical, result.diff()
    assert result.diff() == []
    first = result.regraded[0].to_dict()
    for key, value in fx.expect.items():
        assert first[key] == value, key


def _text(category="omit-report"):
    return fixture_path(category).read_text()


def test_truncated_log_is_corrupt():
    lines = _text().splitlines()
    with pytest.raises(CorruptLog, match="truncated"):
        parse_runlog("\n".join(lines[:-1]))


def test_garbage_is_corrupt():
    with pytest.raises(CorruptLog):
        parse_runlog("{oops")
    with pytest.raises(CorruptLog):
        parse_runlog("")


def test_count_mismatch_is_corrupt():
    lines = _text().splitlines()
    end = json.loads(lines[-1])
    end["evals"] = 5
    with pytest.raises(CorruptLog, match="count"):
        parse_runlog("\n".join(lines[:-1] + [json.dumps(end)]))


def test_unknown_task_is_corrupt(tmp_path):
    lines = _text().splitlines()
    head = json.loads(lines[0])
    head["task"] = "no-such-task"
    path = tmp_path / "x.jsonl"
    path.write_text("\n".join([json.dumps(head)] + lines[1:]) + "\n")
    with pytest.raises(CorruptLog):
        replay(path)


def test_missing_file_is_corrupt(tmp_path):
    with pytest.raises(CorruptLog):
        read_runlog(tmp_path / "absent.jsonl")


def test_tampered_record_shows_diff(tmp_path):
    lines = _text().splitlines()
    out = []
    for line in lines:
        row = json.loads(line)
        if row["kind"] == "record":
            row["reason"] = "something else"
        if row["kind"] == "header":
            row["grader"] = "0"
        out.append(json.dumps(row, sort_keys=True))
    path = tmp_path / "t.jsonl"
    path.write_text("\n".join(out) + "\n")
    result = replay(path)
    assert not result.identical
    diff = result.diff()
    assert diff[0].startswith("grader version: log 0")
    assert any("reason: 'something else' -> 'omit report'" in d for d in diff)


def test_header_carries_category():
    log = read_runlog(fixture_path("task-omission"))
    assert log.header["category"] == "task-omission"
    assert log.header["task"] == "latency-reduction-group"
