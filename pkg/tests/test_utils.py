# -*- coding: utf-8 -*-
import logging

import pytest

from earlock.earlock.exceptions import SegmentationError, ValidationError
from earlock.earlock.utils import log_error, logger, ordered_map, thread_count, throw


def test_logger_namespace():
    assert logger().name == "earlock"
    assert logger("earlock.earlock.sift").name == "earlock.earlock.sift"
    assert logger("scripts").name == "earlock.scripts"


def test_log_error_has_title(caplog):
    with caplog.at_level(logging.ERROR, logger="earlock"):
        log_error("store index unreadable", title="earlock enroll")
    assert "[earlock enroll] store index unreadable" in caplog.text


def test_throw_picks_exception():
    with pytest.raises(ValidationError, match="bad"):
        throw("bad")
    with pytest.raises(SegmentationError):
        throw("nothing left", SegmentationError)


def test_thread_count(monkeypatch):
    monkeypatch.delenv("EARLOCK_THREADS", raising=False)
    assert thread_count() == 1
    assert thread_count(4) == 4
    monkeypatch.setenv("EARLOCK_THREADS", "6")
    assert thread_count() == 6
    assert thread_count(-2) == 1
    with pytest.raises(ValidationError):
        thread_count("lots")


def test_ordered_map_keeps_order():
    items = list(range(30))
    assert ordered_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert ordered_map(str, [], threads=4) == []
