import pandas as pd
import pytest

import blaze_mr as bmr
from blaze_mr.display import (
    _display_line,
    _display_table,
    _display_verdict,
    _filter_emojis,
    _format_background_color,
    _lead_in,
    _log,
    _warning,
)


def test_filter_emojis():
    original = "Hello 🔥"
    no_emojis = "Hello"
    bmr.set_options(use_emojis=True)
    assert _filter_emojis(original) == original
    bmr.set_options(use_emojis=False)
    assert _filter_emojis(original) == no_emojis


@pytest.mark.parametrize(
    "color, expected",
    [
        ("red", "on_red"),
        ("on_green", "on_green"),
        (None, None),
    ],
)
def test_format_background_color(color, expected):
    assert _format_background_color(color) == expected


@pytest.mark.parametrize(
    "lead_in, foreground, background, expected",
    [
        (
            "Hello",
            "red",
            "green",
            "<span style='color:red; background-color:green'>Hello</span>:",
        ),
        (None, "red", "green", ""),
    ],
)
def test_lead_in(lead_in, foreground, background, expected):
    assert _lead_in(lead_in, foreground, background) == expected


def test_display_line(capsys):
    _display_line("Hello")
    assert capsys.readouterr().out == "Hello\n"


def test_warning(capsys):
    _warning("Test warning")
    assert capsys.readouterr().out == "🔥 Blaze warning: Test warning\n"


def test_log_only_when_verbose(capsys):
    _log("quiet", 1)
    assert capsys.readouterr().out == ""
    bmr.set_verbose(True)
    _log("shuffled 3 pairs", 1)
    assert capsys.readouterr().out == "🔥 blaze[1]: shuffled 3 pairs\n"


@pytest.mark.parametrize("passed, word", [(True, "Passed"), (False, "Failed")])
def test_display_verdict(capsys, passed, word):
    _display_verdict(passed, "wrote out.csv")
    out = capsys.readouterr().out
    assert word in out
    assert out.endswith("wrote out.csv\n")


def test_display_table(capsys):
    bmr.set_options(use_emojis=False, indent_table_terminal=2)
    _display_table(pd.DataFrame({"task": ["pi"], "seconds": [0.5]}), name="🔥 bench")
    out = capsys.readouterr().out
    assert "\nbench\n" in out
    assert "task" in out
    assert "\n  0 " in out
