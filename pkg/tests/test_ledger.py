import ast
import re
from pathlib import Path

import pytest

from adnet.ledger import CLAIMS, STATUSES, ClaimEntry, emit_ledger, main

ROOT = Path(__file__).resolve().parents[1]


def test_three_results_rows_not_reproducible():
    rows = [c for c in CLAIMS if c.location.startswith("results table")]
    assert len(rows) == 3
    assert all(c.status == "not-reproducible" for c in rows)
    text = " ".join(c.claim for c in rows)
    assert all(pct in text for pct in ("68.5%", "76.4%", "82%"))


def test_training_hyperparameters_have_entries():
    text = " ".join(c.claim for c in CLAIMS)
    for value in ("batch size 200", "100 training epochs", "0.001", "0.95", "0.00001", "dropout probability 0.5",
                  "0.0001"):
        assert value in text


def test_every_criterion_referenced():
    referenced = {int(n) for c in CLAIMS for n in re.findall(r"criterion (\d+)", c.evidence)}
    assert referenced == set(range(1, 11))


def test_statuses_are_known():
    assert {c.status for c in CLAIMS} <= set(STATUSES)
    with pytest.raises(ValueError):
        ClaimEntry("x", "y", "verified", "z")


def _test_names(path):
    tree = ast.parse(path.read_text())
    return {n.name for n in tree.body if isinstance(n, ast.FunctionDef)}


def test_test_pointers_exist():
    pointers = {p for c in CLAIMS for p in re.findall(r"(tests/\w+\.py)::(\w+)", c.evidence)}
    assert pointers
    for file, name in pointers:
        assert name in _test_names(ROOT / file), f"{file}::{name}"


def test_emit_is_stable_and_checked_in(tmp_path):
    assert emit_ledger() == emit_ledger()
    assert (ROOT / "docs" / "reproduction.md").read_text() == emit_ledger()
    assert main([str(tmp_path / "l.md")]) == 0
    assert (tmp_path / "l.md").read_text() == emit_ledger()


def test_table_has_one_row_per_claim():
    rows = [line for line in emit_ledger().splitlines() if re.match(r"\| \d+ \|", line)]
    assert len(rows) == len(CLAIMS)
