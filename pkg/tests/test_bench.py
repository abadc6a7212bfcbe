import pytest

from sixstate.bench import (
    CONFIG_TABLE_COLUMNS,
    PULSE_LOG_COLUMNS,
    embedded_config_table,
    export_pulse_log,
    ingest_pulse_log,
    interpret_table,
    label_map,
    load_config_table,
    replay,
    synthesize_pulse_log,
    verify_config_table,
)
from sixstate.errors import (
    ConfigTableError,
    MalformedHeaderError,
    MalformedRowError,
    NoDataError,
    NonBinaryDetectorError,
    PulseLogNotFoundError,
    UnknownConfigLabelError,
    UnresolvedConfigError,
)
from sixstate.polarization import Basis, PolState
from sixstate.protocol import AttackModel, ProtocolKind, SessionConfig, run_session, sift
from sixstate.stats import correlation_matrix

# Tabletop configuration table as printed.
PRINTED_TABLE = [
    ("A", 0, 1, 0, 0, 0, 1, 0, -45.0, 0.0),
    ("B", 1, 1, 0, 0, 0, 0, 1, 45.0, 0.0),
    ("C", 0, 0, 1, 0, 1, 0, 0, 0.0, 45.0),
    ("D", 1, 0, 0, 0, 1, 0, 1, 90.0, 45.0),
    ("E", 1, 0, 1, 0, 1, 0, 1, 90.0, 45.0),
    ("F", 0, 0, 0, 0, 0, 0, 0, 0.0, 0.0),
    ("G", 1, 0, 1, 0, 0, 1, 1, 90.0, 0.0),
    ("H", 1, 0, 1, 0, 0, 0, 1, 90.0, 0.0),
    ("I", 0, 0, 0, 0, 0, 1, 0, 0.0, 0.0),
    ("J", 1, 0, 0, 0, 0, 0, 1, 90.0, 0.0),
    ("K", 1, 1, 0, 0, 1, 0, 1, 45.0, 45.0),
    ("L", 0, 0, 0, 0, 1, 0, 0, 0.0, 45.0),
    ("M", 0, 1, 0, 0, 1, 0, 0, -45.0, 45.0),
    ("N", 1, 1, 0, 0, 0, 1, 1, 45.0, 0.0),
    ("O", 1, 0, 0, 0, 0, 1, 1, 90.0, 0.0),
    ("P", 0, 1, 0, 0, 0, 0, 0, -45.0, 0.0),
    ("Q", 0, 0, 1, 0, 0, 0, 0, 0.0, 0.0),
    ("R", 0, 0, 1, 0, 0, 1, 0, 0.0, 0.0),
]

S, B = PolState, Basis
DERIVED = {
    "A": (S.A, B.RL), "B": (S.D, B.HV), "C": (S.L, B.DA), "D": (S.V, B.DA), "E": (S.R, B.DA),
    "F": (S.H, B.HV), "G": (S.R, B.RL), "H": (S.R, B.HV), "I": (S.H, B.RL), "J": (S.V, B.HV),
    "K": (S.D, B.DA), "L": (S.H, B.DA), "M": (S.A, B.DA), "N": (S.D, B.RL), "O": (S.V, B.RL),
    "P": (S.A, B.HV), "Q": (S.L, B.HV), "R": (S.L, B.RL),
}

HEADER = ",".join(PULSE_LOG_COLUMNS) + "\n"


def write_table(path, rows):
    lines = [",".join(CONFIG_TABLE_COLUMNS)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


# --- configuration table ---

def test_embedded_table_is_verbatim():
    table = embedded_config_table()
    assert [entry.as_row() for entry in table] == PRINTED_TABLE
    assert [e.label for e in table] == [chr(ord("A") + i) for i in range(18)]


def test_interpretation_of_every_configuration():
    interps = interpret_table()
    assert {i.label: (i.alice_state, i.bob_basis) for i in interps} == DERIVED
    assert all(i.pd0_bit == 0 and not i.unresolved for i in interps)


def test_configurations_cover_every_state_and_basis_once():
    by_pair = label_map(interpret_table())
    assert len(by_pair) == 18
    report = verify_config_table()
    assert set(report.pair_counts().values()) == {1}


def test_verification_reports_printed_bit_mismatches():
    report = verify_config_table()
    assert report.unresolved == []
    assert set(report.mismatches) == set("ABCEGHKMNPQR")
    consistent = {r.label for r in report.rows if r.consistency_with_alice_bit}
    assert consistent == set("DFIJLO")
    row = report.to_dict()[0]
    assert row["label"] == "A"
    assert row["alice_state"] == "A"
    assert row["derived_bit"] == 1 and row["printed_bit"] == 0


def test_load_config_table_round_trip(tmp_path):
    table = load_config_table(write_table(tmp_path / "table.csv", PRINTED_TABLE))
    assert table == embedded_config_table()


def test_unresolved_configuration(tmp_path):
    rows = list(PRINTED_TABLE)
    rows[5] = ("F", 0, 0, 0, 0, 0, 0, 0, 10.0, 0.0)
    table = load_config_table(write_table(tmp_path / "table.csv", rows))
    report = verify_config_table(table)
    assert report.unresolved == ["F"]
    assert "F" not in report.mismatches

    log = tmp_path / "pulses.csv"
    log.write_text(HEADER + "0,F,1,0\n")
    parsed, _ = ingest_pulse_log(log, table)
    with pytest.raises(UnresolvedConfigError) as exc_info:
        replay(parsed, interpret_table(table))
    assert exc_info.value.label == "F"


@pytest.mark.parametrize(
    "text",
    [
        "label,a_hwp1\nA,0\n",
        ",".join(CONFIG_TABLE_COLUMNS) + "\nA,2,0,0,0,0,0,0,0,0\n",
        ",".join(CONFIG_TABLE_COLUMNS) + "\nA,0,0,0,0,0,0,0,north,0\n",
        ",".join(CONFIG_TABLE_COLUMNS) + "\nAB,0,0,0,0,0,0,0,0,0\n",
        ",".join(CONFIG_TABLE_COLUMNS) + "\nA,0,0,0,0,0,0,0,0,0\nA,0,0,0,0,0,0,0,0,0\n",
        "",
        ",".join(CONFIG_TABLE_COLUMNS).encode() + b"\n\xff\xfe,0,0,0,0,0,0,0,0,0\n",
    ],
)
def test_malformed_config_tables(tmp_path, text):
    path = tmp_path / "table.csv"
    path.write_bytes(text if isinstance(text, bytes) else text.encode())
    with pytest.raises(ConfigTableError):
        load_config_table(path)


def test_missing_config_table(tmp_path):
    with pytest.raises(ConfigTableError):
        load_config_table(tmp_path / "absent.csv")


# --- pulse logs ---

@pytest.mark.parametrize("seed", range(10))
def test_pulse_log_round_trip(tmp_path, seed):
    records, path = synthesize_pulse_log(SessionConfig(seed=seed), tmp_path / "pulses.csv")
    assert path.read_text().startswith(HEADER)
    rows, diagnostics = ingest_pulse_log(path)
    assert diagnostics.dropped == 0 and diagnostics.kept == len(records)

    result = replay(rows, interpret_table())
    assert result.records == records
    assert result.summary == sift(records)
    assert (result.matrix.cells == correlation_matrix(records).cells).all()


def test_intercepted_log_keeps_eve_columns(tmp_path):
    config = SessionConfig(n_pulses=1500, seed=3, attack=AttackModel.INTERCEPT_RESEND)
    records, path = synthesize_pulse_log(config, tmp_path / "pulses.csv")
    assert path.read_text().splitlines()[0] == "pulse_index,config_label,pd0,pd1,eve_basis,eve_bit"
    rows, _ = ingest_pulse_log(path)
    result = replay(rows, interpret_table())
    assert result.records == records
    assert result.summary.n_compromised == sift(records).n_compromised > 0


def test_pulse_logs_are_byte_identical(tmp_path):
    config = SessionConfig(n_pulses=40_000, seed=77)
    export_pulse_log(run_session(config, workers=1), tmp_path / "one.csv")
    export_pulse_log(run_session(config, workers=8), tmp_path / "many.csv")
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "many.csv").read_bytes()


def test_export_needs_a_configuration_for_every_pair(tmp_path):
    rows = list(PRINTED_TABLE)
    rows[5] = ("F", 0, 0, 0, 0, 0, 0, 0, 10.0, 0.0)
    table = load_config_table(write_table(tmp_path / "table.csv", rows))
    records = [r for r in run_session(SessionConfig(n_pulses=500, seed=1)) if r.alice_state is PolState.H]
    records = [r for r in records if r.bob_basis is Basis.HV]
    assert records
    with pytest.raises(ConfigTableError):
        export_pulse_log(records, tmp_path / "pulses.csv", interpret_table(table))


def test_rows_without_a_single_click_are_dropped(tmp_path):
    path = tmp_path / "pulses.csv"
    path.write_text(HEADER + "0,F,1,1\n1,F,1,0\n2,J,0,0\n3,K,0,1\n")
    rows, diagnostics = ingest_pulse_log(path)
    assert [r.pulse_index for r in rows] == [1, 3]
    assert diagnostics.to_dict() == {"total_rows": 4, "kept_rows": 2, "dropped_rows": 2}
    assert diagnostics.dropped_indices == [0, 2]

    records = replay(rows, interpret_table()).records
    assert (records[0].alice_state, records[0].bob_bit) == (PolState.H, 0)
    assert (records[1].alice_state, records[1].bob_basis, records[1].bob_bit) == (PolState.D, Basis.DA, 1)


@pytest.mark.parametrize(
    "text,error",
    [
        ("index,label,pd0,pd1\n0,F,1,0\n", MalformedHeaderError),
        ("", MalformedHeaderError),
        (HEADER + "zero,F,1,0\n", MalformedRowError),
        (HEADER + "-1,F,1,0\n", MalformedRowError),
        (HEADER + "0,F,2,0\n", NonBinaryDetectorError),
        (HEADER + "0,F,1,x\n", NonBinaryDetectorError),
        (HEADER + "0,Z,1,0\n", UnknownConfigLabelError),
        ("pulse_index,config_label,pd0,pd1,eve_basis,eve_bit\n0,F,1,0,XY,0\n", MalformedRowError),
        ("pulse_index,config_label,pd0,pd1,eve_basis,eve_bit\n0,F,1,0,HV,3\n", MalformedRowError),
        (HEADER.encode() + b"0,\xff\xfe,1,0\n", MalformedRowError),
    ],
)
def test_malformed_pulse_logs(tmp_path, text, error):
    path = tmp_path / "pulses.csv"
    path.write_bytes(text if isinstance(text, bytes) else text.encode())
    with pytest.raises(error):
        ingest_pulse_log(path)


def test_missing_pulse_log(tmp_path):
    with pytest.raises(PulseLogNotFoundError):
        ingest_pulse_log(tmp_path / "absent.csv")
    with pytest.raises(FileNotFoundError):
        ingest_pulse_log(tmp_path / "absent.csv")


def test_header_only_log_has_no_data(tmp_path):
    path = tmp_path / "pulses.csv"
    path.write_text(HEADER)
    rows, diagnostics = ingest_pulse_log(path)
    assert rows == [] and diagnostics.total_rows == 0
    with pytest.raises(NoDataError):
        replay(rows, interpret_table())


def test_bb84_sessions_export_with_linear_configurations(tmp_path):
    records, path = synthesize_pulse_log(
        SessionConfig(n_pulses=800, seed=2, protocol=ProtocolKind.BB84), tmp_path / "pulses.csv"
    )
    labels = {line.split(",")[1] for line in path.read_text().splitlines()[1:]}
    assert labels <= {label for label, (state, basis) in DERIVED.items() if basis is not B.RL and state not in (S.R, S.L)}
    assert replay(ingest_pulse_log(path)[0], interpret_table()).records == records
