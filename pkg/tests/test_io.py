import json
import warnings

import numpy as np
import pytest

from subgroup_debias.data_io import (
    SubgroupData,
    encode_subgroup_data,
    load_design,
    parse_encoded_csv,
    parse_subgroup_csv,
    write_encoded_csv,
)
from subgroup_debias.errors import (
    DataError,
    DegenerateCellWarning,
    EmptyFile,
    MalformedRow,
    NonBinaryOutcome,
    UnknownColumn,
)
from subgroup_debias.simulate import six_subgroup_design


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def balanced_csv(k=2, reps=2):
    """Every subgroup-by-treatment cell filled with `reps` rows."""
    lines = ["y,t,s,w1"]
    for l in range(1, k + 1):
        for t in (0, 1):
            for i in range(reps):
                lines.append(f"{(l + t + i) % 2},{t},{l},0.{l}{t}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------------- parse

def test_single_record_parses(tmp_path):
    p = write(tmp_path, "y,t,s,w1\n1,0,2,0.5\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCellWarning)
        data = parse_subgroup_csv(p)
    assert data.y.tolist() == [1.0]
    assert data.t.tolist() == [0.0]
    assert data.s.tolist() == [2]
    assert data.w.shape == (1, 1)
    assert data.w_labels == ["w1"]


def test_nonbinary_outcome_reports_data_row(tmp_path):
    p = write(tmp_path, "y,t,s,w1\n2,0,1,0.5\n")
    with pytest.raises(NonBinaryOutcome, match="row 1"):
        parse_subgroup_csv(p)


def test_nonbinary_treatment_rejected(tmp_path):
    p = write(tmp_path, "y,t,s,w1\n1,2,1,0.5\n")
    with pytest.raises(NonBinaryOutcome, match="row 1"):
        parse_subgroup_csv(p)


def test_interior_label_gap_rejected(tmp_path):
    p = write(tmp_path, "y,t,s,w1\n1,0,1,0.5\n0,1,3,0.2\n")
    with pytest.raises(DataError, match="missing \\[2\\]"):
        parse_subgroup_csv(p)


def test_label_validation(tmp_path):
    with pytest.raises(MalformedRow, match="row 2"):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n1,0,1,0.5\n0,1,1.5,0.2\n"))
    with pytest.raises(MalformedRow):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n1,0,0,0.5\n", "b.csv"))


def test_malformed_rows(tmp_path):
    with pytest.raises(MalformedRow, match="row 2"):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n1,0,1,0.5\n0,1,1\n"))
    with pytest.raises(MalformedRow, match="row 1"):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n1,0,1,abc\n", "b.csv"))
    with pytest.raises(MalformedRow, match="not numeric"):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\nx,0,1,0.5\n", "c.csv"))


def test_header_validation(tmp_path):
    with pytest.raises(UnknownColumn):
        parse_subgroup_csv(write(tmp_path, "y,t,group,w1\n1,0,1,0.5\n"))
    with pytest.raises(UnknownColumn):
        parse_subgroup_csv(write(tmp_path, "y,t,s,age\n1,0,1,0.5\n", "b.csv"))


def test_empty_inputs(tmp_path):
    with pytest.raises(EmptyFile):
        parse_subgroup_csv(write(tmp_path, ""))
    with pytest.raises(EmptyFile):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n", "b.csv"))


def test_thin_cells_warn_and_balanced_does_not(tmp_path):
    with pytest.warns(DegenerateCellWarning):
        parse_subgroup_csv(write(tmp_path, "y,t,s,w1\n1,1,1,0.5\n0,0,1,0.2\n"))
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateCellWarning)
        parse_subgroup_csv(write(tmp_path, balanced_csv(), "b.csv"))


def test_blank_lines_skipped(tmp_path):
    p = write(tmp_path, balanced_csv() + "\n\n")
    data = parse_subgroup_csv(p)
    assert data.y.shape == (8,)


# ------------------------------------------------------------------- encode

def sample_data():
    return SubgroupData(
        y=np.array([1.0, 0.0, 1.0, 0.0]),
        t=np.array([1.0, 0.0, 1.0, 1.0]),
        s=np.array([3, 2, 6, 1]),
        w=np.array([[0.5], [0.2], [-1.0], [0.0]]),
        w_labels=["w1"],
    )


def test_encode_layout():
    design = encode_subgroup_data(sample_data())
    K = 6
    assert design.z.shape == (4, K)
    # t=1, s=3 -> third basis vector
    assert design.z[0].tolist() == [0, 0, 1, 0, 0, 0]
    # t=0 -> zero row regardless of s
    assert design.z[1].tolist() == [0] * K
    assert design.x.shape[1] == 1 + (K - 1) + 1
    assert np.all(design.x[:, 0] == 1.0)
    # s=K leaves every kept indicator off
    assert design.x[2, 1:K].tolist() == [0] * (K - 1)
    assert design.z_labels == [f"z:s={l}" for l in range(1, 7)]
    assert design.x_labels[:3] == ["intercept", "s=1", "s=2"]
    assert design.x_labels[-1] == "w1"
    assert design.forced == tuple(range(K))


def test_encode_round_trip_recovers_t_and_s():
    data = sample_data()
    design = encode_subgroup_data(data)
    K = design.p1
    t_back = design.z.sum(axis=1)
    assert np.array_equal(t_back, data.t)
    indic = design.x[:, 1:K]
    s_back = np.where(indic.sum(axis=1) > 0, indic.argmax(axis=1) + 1, K)
    assert np.array_equal(s_back, data.s)
    # row order preserved
    assert np.array_equal(design.y, data.y)
    assert np.array_equal(design.x[:, K:], data.w)


# ------------------------------------------------------- encoded CSV format

def test_encoded_round_trip(tmp_path):
    design, _ = six_subgroup_design(n=40, p=20, seed=9)
    csv_path = tmp_path / "design.csv"
    sidecar = tmp_path / "design.roles.json"
    write_encoded_csv(design, csv_path, sidecar)
    back = parse_encoded_csv(csv_path, sidecar)
    assert np.array_equal(back.y, design.y)
    assert np.array_equal(back.z, design.z)
    assert np.array_equal(back.x, design.x)
    assert back.z_labels == list(design.z_labels)
    assert back.x_labels == list(design.x_labels)
    assert back.forced == design.forced


def test_encoded_validation(tmp_path):
    design, _ = six_subgroup_design(n=20, p=20, seed=9)
    csv_path = tmp_path / "d.csv"
    sidecar = tmp_path / "d.roles.json"
    write_encoded_csv(design, csv_path, sidecar)

    roles = json.loads(sidecar.read_text())
    del roles["y"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(roles))
    with pytest.raises(DataError, match="missing role"):
        parse_encoded_csv(csv_path, bad)

    text = csv_path.read_text().splitlines()
    extra = tmp_path / "extra.csv"
    extra.write_text("\n".join([text[0] + ",mystery"] +
                               [r + ",1.0" for r in text[1:]]) + "\n")
    with pytest.raises(UnknownColumn):
        parse_encoded_csv(extra, sidecar)

    short = tmp_path / "short.csv"
    short.write_text("\n".join([",".join(text[0].split(",")[:-1])] +
                               [",".join(r.split(",")[:-1]) for r in text[1:]]) + "\n")
    with pytest.raises(DataError, match="missing from"):
        parse_encoded_csv(short, sidecar)

    broken = tmp_path / "broken.csv"
    broken.write_text(text[0] + "\n" + text[1].replace("1.0", "??", 1) + "\n")
    with pytest.raises(MalformedRow, match="row 1"):
        parse_encoded_csv(broken, sidecar)


def test_encoded_nonbinary_outcome(tmp_path):
    design, _ = six_subgroup_design(n=10, p=20, seed=9)
    design.y[3] = 1.0
    csv_path = tmp_path / "d.csv"
    sidecar = tmp_path / "d.roles.json"
    write_encoded_csv(design, csv_path, sidecar)
    lines = csv_path.read_text().splitlines()
    fields = lines[4].split(",")
    fields[0] = "2.0"
    lines[4] = ",".join(fields)
    csv_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(NonBinaryOutcome, match="row 4"):
        parse_encoded_csv(csv_path, sidecar)


# ----------------------------------------------------------------- dispatch

def test_load_design_dispatch(tmp_path):
    p = write(tmp_path, balanced_csv())
    design = load_design(p)
    assert design.p1 == 2
    assert design.z_labels == ["z:s=1", "z:s=2"]

    d0, _ = six_subgroup_design(n=30, p=20, seed=1)
    csv_path = tmp_path / "enc.csv"
    sidecar = tmp_path / "enc.roles.json"
    write_encoded_csv(d0, csv_path, sidecar)
    d1 = load_design(csv_path, sidecar)
    assert np.array_equal(d1.x, d0.x)
