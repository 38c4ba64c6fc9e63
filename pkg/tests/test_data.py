import itertools
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlcmcr.data import (
    DEFAULT_GROUP,
    DataError,
    GroupedDataset,
    ParseError,
    PatternCountTable,
    Schema,
    aggregate_patterns,
    all_patterns,
    cell_counts,
    expand_counts,
    format_pattern_counts,
    format_records,
    load_dataset,
    parse_pattern,
    parse_pattern_counts,
    parse_records,
    pattern_codes,
    pattern_string,
    records_from_patterns,
)

TABLE1 = resources.files("nlcmcr") / "datasets" / "table1_patterns.csv"


def table1():
    return load_dataset(TABLE1)


def test_record_row_encoding():
    ds = parse_records("list_1,list_2,list_3,list_4,group\n1,0,0,0,Aleppo-2011-04\n")
    assert ds.group_keys == ["Aleppo-2011-04"]
    assert tuple(ds.groups[0][1][0]) == (True, False, False, False)


def test_all_zero_row_rejected():
    with pytest.raises(DataError, match="row 2"):
        parse_records("list_1,list_2,list_3,list_4,group\n0,0,0,0,X\n")


def test_non_binary_value_names_row():
    with pytest.raises(ParseError, match="row 3"):
        parse_records("list_1,list_2,group\n1,0,a\n1,2,a\n")


def test_single_list_rejected():
    with pytest.raises(DataError, match="at least two"):
        parse_records("list_1,group\n1,a\n")


def test_missing_group_column_pools_records():
    ds = parse_records("list_1,list_2\n1,0\n0,1\n1,1\n")
    assert ds.group_keys == [DEFAULT_GROUP] and ds.n == 3


def test_row_order_preserved_within_group():
    ds = parse_records("list_1,list_2,group\n1,0,a\n0,1,b\n1,1,a\n")
    assert [pattern_string(r) for r in ds.groups[0][1]] == ["10", "11"]


def test_explicit_schema_and_delimiter():
    ds = parse_records("b;a;g\n1;0;x\n", Schema(list_columns=["a", "b"], group_column="g", delimiter=";"))
    assert pattern_string(ds.groups[0][1][0]) == "01"


def test_empty_record_file():
    with pytest.raises(ParseError):
        parse_records("# only a comment\n")


def test_table1_margins():
    t = table1()
    assert isinstance(t, PatternCountTable)
    assert t.n == 36226
    assert t["1111"] == 4252 and t["1000"] == 6039


def test_table1_record_level_round_trip():
    t = table1()
    text = format_records(expand_counts(t, "syria"))
    ds = parse_records(text)
    assert ds.n == 36226
    assert aggregate_patterns(ds).counts == t.counts


def test_singleton_aggregate():
    ds = records_from_patterns([("g", ["10"])])
    assert aggregate_patterns(ds).counts == {(True, False): 1}


def test_expand_counts_examples():
    ds = expand_counts(PatternCountTable(2, {(True, False): 2}), "g")
    assert [pattern_string(r) for r in ds.groups[0][1]] == ["10", "10"]
    with pytest.raises(DataError, match="nonempty"):
        expand_counts(PatternCountTable(2, {}))


def test_pattern_table_rejects_zero_pattern():
    with pytest.raises(DataError):
        PatternCountTable(2, {(False, False): 1})


def test_grouped_dataset_invariants():
    with pytest.raises(DataError):
        GroupedDataset(2, ())
    with pytest.raises(DataError):
        GroupedDataset(2, (("a", np.array([[1, 0]], bool)), ("a", np.array([[0, 1]], bool))))
    with pytest.raises(DataError):
        GroupedDataset(2, (("a", np.zeros((0, 2), bool)),))


def test_pattern_helpers():
    assert parse_pattern("1010") == (True, False, True, False)
    assert pattern_string((True, False, True, False)) == "1010"
    pats = all_patterns(3)
    assert pats.shape == (7, 3)
    np.testing.assert_array_equal(pattern_codes(pats), np.arange(7))


def test_pattern_count_parsing_errors():
    with pytest.raises(ParseError):
        parse_pattern_counts("pattern,n\n10,1\n")
    with pytest.raises(ParseError):
        parse_pattern_counts("pattern,count\n10,1\n101,2\n")
    with pytest.raises(ParseError):
        parse_pattern_counts("pattern,count\n10,x\n")
    with pytest.raises(DataError):
        parse_pattern_counts("pattern,count\n00,3\n")


def test_pattern_count_format_round_trip():
    t = table1()
    assert parse_pattern_counts(format_pattern_counts(t)).counts == t.counts


def test_cell_counts_layout():
    ds = records_from_patterns([("a", ["10", "10", "11"]), ("b", ["01"])])
    cells = cell_counts(ds)
    assert cells.counts.tolist() == [[0, 2, 1], [1, 0, 0]]
    assert cells.n == 4 and cells.group_sizes.tolist() == [3, 1]
    assert cells.pooled().counts.tolist() == [[1, 2, 1]]


patterns_st = st.lists(
    st.tuples(st.sampled_from("abc"), st.sampled_from(["100", "010", "001", "110", "111", "011", "101"])),
    min_size=1, max_size=60,
)


def _build(rows):
    groups = {}
    for g, p in rows:
        groups.setdefault(g, []).append(p)
    return records_from_patterns(groups.items())


@given(patterns_st)
def test_aggregate_invariant_to_grouping(rows):
    grouped = _build(rows)
    pooled = _build([("x", p) for _, p in rows])
    assert aggregate_patterns(grouped).counts == aggregate_patterns(pooled).counts


@given(patterns_st)
def test_expand_aggregate_round_trip(rows):
    t = aggregate_patterns(_build(rows))
    assert aggregate_patterns(expand_counts(t)).counts == t.counts


@given(patterns_st, st.permutations([0, 1, 2]))
def test_column_permutation_permutes_patterns(rows, order):
    ds = _build(rows)
    text = format_records(ds)
    header, *body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    new_header = ",".join([f"list_{order.index(s) + 1}" for s in range(3)] + ["group"])
    permuted = parse_records("\n".join([new_header] + body) + "\n")
    a = aggregate_patterns(ds).counts
    b = aggregate_patterns(permuted).counts
    assert b == {tuple(p[s] for s in order): c for p, c in a.items()}
