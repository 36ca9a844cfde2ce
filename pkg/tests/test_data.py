import pytest

from fairaudit.data import (
    EXCLUDED,
    GENDER_SPEC,
    GROUP_A,
    GROUP_B,
    NUMERIC,
    URM_SPEC,
    DataError,
    Dataset,
    FeatureSchema,
    GroupSpec,
    LabeledSplit,
    SchemaError,
    assign_groups,
    concat,
    format_schema,
    load_csv,
    load_schema,
    parse_schema,
    save_schema,
    write_csv,
)

from conftest import raw_schema


def row(sid="s1", sem="F14", course="C1", grade="A", eth="White", x=1.5, c="u"):
    return (sid, sem, course, grade, eth, x, c)


def test_schema_roundtrip(tmp_path):
    s = raw_schema()
    assert parse_schema(format_schema(s)) == s
    save_schema(s, tmp_path / "s.schema")
    assert load_schema(tmp_path / "s.schema") == s


def test_column_named_like_a_directive():
    # "course" is both a column name and the course directive target
    s = parse_schema("course = categorical\ngrade = label-source\n@course = course\n")
    assert s.course_name == "course"
    assert s.names == ("course", "grade")


@pytest.mark.parametrize("text, msg", [
    ("a = widget\ng = label-source\n", "unknown kind"),
    ("g = label-source\n@colour = red\n", "unknown directive"),
    ("a numeric\n", "expected 'key = value'"),
    ("a = numeric\n", "label-source"),
    ("a = numeric\na = numeric\ng = label-source\n", "duplicate"),
    ("g = label-source\n@course = nope\n", "course column"),
])
def test_schema_errors(text, msg):
    with pytest.raises(SchemaError, match=msg):
        parse_schema(text)


def test_csv_roundtrip_keeps_floats_and_missing(tmp_path):
    s = raw_schema()
    rows = (row(x=0.1 + 0.2), row(sid="s2", x=None, c=None), row(sid="s3", x=-999.0, eth="Black"))
    d = Dataset(s, rows)
    write_csv(d, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", s)
    assert back.rows == d.rows
    assert back.rows[0][5] == 0.1 + 0.2


def test_csv_header_mismatch_names_columns(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sid,sem,course,grade,ethnicity,x,extra\n")
    with pytest.raises(SchemaError, match=r"missing \['c'\].*unexpected \['extra'\]"):
        load_csv(p, raw_schema())


def test_csv_bad_number_names_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sid,sem,course,grade,ethnicity,x,c\ns1,F14,C1,A,White,1.0,u\ns2,F14,C1,A,White,abc,u\n")
    with pytest.raises(DataError, match="row 2.*'x'"):
        load_csv(p, raw_schema())


def test_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv", raw_schema())


def test_dataset_validates_cell_types():
    with pytest.raises(DataError, match="numeric cell"):
        Dataset(raw_schema(), (row(x="1.0"),))
    with pytest.raises(DataError, match="cells"):
        Dataset(raw_schema(), (row()[:-1],))


def test_concat_requires_same_schema():
    a = Dataset(raw_schema(), (row(),))
    b = Dataset(raw_schema((("x", NUMERIC),)), (row()[:-1],))
    assert len(concat(a, a)) == 2
    with pytest.raises(SchemaError):
        concat(a, b)


def test_split_rejects_shared_records():
    s = raw_schema()
    train = Dataset(s, (row(sid="s1", course="C1"), row(sid="s2", course="C1")))
    LabeledSplit(train, Dataset(s, (row(sid="s1", course="C2", sem="F15"),)))
    with pytest.raises(DataError, match="both train and test"):
        LabeledSplit(train, Dataset(s, (row(sid="s1", course="C1", sem="F15"),)))


def test_urm_mapping():
    s = raw_schema()
    toks = ["Black", "Hispanic", "Asian", "White", "Unknown", "Other", None, "American Indian",
            "Hawaiian or Pacific Islander", "Multicultural"]
    d = Dataset(s, tuple(row(sid=f"s{i}", eth=t) for i, t in enumerate(toks)))
    g = assign_groups(d, URM_SPEC)
    A, B, X = GROUP_A, GROUP_B, EXCLUDED
    assert g.codes.tolist() == [A, A, B, B, X, X, X, A, A, A]
    assert g.labels == ("URM", "non-URM")
    assert g.label_of(A) == "URM" and g.label_of(X) is None


def test_unmapped_token_is_an_error():
    d = Dataset(raw_schema(), (row(eth="Martian"),))
    with pytest.raises(DataError, match="Martian"):
        assign_groups(d, URM_SPEC)


def test_group_source_must_be_token_column():
    d = Dataset(raw_schema(), (row(),))
    spec = GroupSpec("x", "x", "lo", "hi", {"1.5": "A"})
    with pytest.raises(SchemaError):
        assign_groups(d, spec)


def test_gender_spec_and_bad_mapping():
    assert GENDER_SPEC.mapping["Female"] == "B"
    with pytest.raises(SchemaError):
        GroupSpec("g", "gender", "a", "b", {"x": "C"})
    with pytest.raises(SchemaError):
        GroupSpec("g", "gender", "a", "a", {"x": "A"})


def test_labels_require_label_column():
    with pytest.raises(SchemaError):
        Dataset(raw_schema(), (row(),)).labels()
