"""
Optical-bench configuration table, pulse-log I/O and dataset replay.

The 18 bench configurations are embedded verbatim. Each row is interpreted
optically:

* Alice: |H> through a half-wave plate at ``alice_angle / 2`` (so the
  linear output sits at ``alice_angle``), then, when the QWP flag is set,
  a quarter-wave plate at ``ALICE_QWP_AXIS_DEG``.
* Bob: a quarter-wave plate at ``BOB_QWP_AXIS_DEG`` when the flag is set,
  then a half-wave plate at ``bob_angle / 2``, then the PBS. The state
  routed to PD0 is ``analyzer^dagger |H>``; its basis is Bob's basis and
  its bit is the bit PD0 reports.

Outputs are classified against the six named states by fidelity. The
HWP1/HWP2 flags are carried but not used: the angle columns fix the
rotation.

Pulse-log CSV: header ``pulse_index,config_label,pd0,pd1``, optionally
followed by ``eve_basis,eve_bit`` when the log carries Eve's choices.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd

from .errors import (
    ConfigTableError,
    MalformedHeaderError,
    MalformedRowError,
    NoDataError,
    NonBinaryDetectorError,
    PulseLogNotFoundError,
    UnknownConfigLabelError,
    UnresolvedConfigError,
)
from .polarization import (
    Basis,
    JonesMatrix,
    PolState,
    apply,
    basis_of,
    bit_of,
    classify,
    compose,
    dagger,
    hwp_matrix,
    qwp_matrix,
    state_of,
)
from .protocol import Detector, PulseRecord, SessionConfig, SiftSummary, run_session, sift
from .stats import CorrelationMatrix, correlation_matrix

logger = logging.getLogger(__name__)

ALICE_QWP_AXIS_DEG = 45.0
BOB_QWP_AXIS_DEG = 45.0

PULSE_LOG_COLUMNS = ["pulse_index", "config_label", "pd0", "pd1"]
EVE_COLUMNS = ["eve_basis", "eve_bit"]
CONFIG_TABLE_COLUMNS = [
    "label",
    "a_hwp1",
    "a_hwp2",
    "a_qwp",
    "b_hwp1",
    "b_hwp2",
    "b_qwp",
    "alice_bit",
    "alice_angle",
    "bob_angle",
]

# label, Alice HWP1/HWP2/QWP, Bob HWP1/HWP2/QWP, Alice bit, Alice angle, Bob angle
_EMBEDDED_ROWS = (
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
)


@dataclass(frozen=True)
class ConfigEntry:
    label: str
    alice_hwp1: int
    alice_hwp2: int
    alice_qwp: int
    bob_hwp1: int
    bob_hwp2: int
    bob_qwp: int
    alice_bit: int
    alice_angle_deg: float
    bob_angle_deg: float

    def to_dict(self) -> Dict[str, object]:
        return dict(zip(CONFIG_TABLE_COLUMNS, self.as_row()))

    def as_row(self) -> Tuple[object, ...]:
        return (
            self.label,
            self.alice_hwp1,
            self.alice_hwp2,
            self.alice_qwp,
            self.bob_hwp1,
            self.bob_hwp2,
            self.bob_qwp,
            self.alice_bit,
            self.alice_angle_deg,
            self.bob_angle_deg,
        )


@dataclass(frozen=True)
class ConfigInterpretation:
    label: str
    alice_state: Optional[PolState]
    bob_basis: Optional[Basis]
    # Bit reported by PD0 under this analyzer setting.
    pd0_bit: Optional[int]
    unresolved: bool


@dataclass(frozen=True)
class VerificationRow:
    label: str
    resolved: bool
    alice_state: Optional[PolState]
    bob_basis: Optional[Basis]
    printed_bit: int
    derived_bit: Optional[int]
    consistency_with_alice_bit: bool

    def to_dict(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "resolved": self.resolved,
            "alice_state": str(self.alice_state) if self.alice_state else None,
            "bob_basis": str(self.bob_basis) if self.bob_basis else None,
            "printed_bit": self.printed_bit,
            "derived_bit": self.derived_bit,
            "consistency_with_alice_bit": self.consistency_with_alice_bit,
        }


@dataclass(frozen=True)
class VerificationReport:
    rows: Tuple[VerificationRow, ...]

    @property
    def unresolved(self) -> List[str]:
        return [r.label for r in self.rows if not r.resolved]

    @property
    def mismatches(self) -> List[str]:
        """Resolved rows whose derived bit disagrees with the printed bit."""
        return [r.label for r in self.rows if r.resolved and not r.consistency_with_alice_bit]

    def pair_counts(self) -> Dict[Tuple[PolState, Basis], int]:
        counts: Dict[Tuple[PolState, Basis], int] = {}
        for r in self.rows:
            if r.resolved:
                key = (r.alice_state, r.bob_basis)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def to_dict(self) -> List[Dict[str, object]]:
        return [r.to_dict() for r in self.rows]


@dataclass(frozen=True)
class PulseLogRow:
    pulse_index: int
    config_label: str
    detector_pd0: int
    detector_pd1: int
    eve_basis: Optional[Basis] = None
    eve_bit: Optional[int] = None


@dataclass
class IngestDiagnostics:
    total_rows: int = 0
    dropped: int = 0
    dropped_indices: List[int] = field(default_factory=list)

    @property
    def kept(self) -> int:
        return self.total_rows - self.dropped

    def to_dict(self) -> Dict[str, object]:
        return {"total_rows": self.total_rows, "kept_rows": self.kept, "dropped_rows": self.dropped}


class ReplayResult(NamedTuple):
    records: List[PulseRecord]
    summary: SiftSummary
    matrix: CorrelationMatrix


# --- configuration table ---

def embedded_config_table() -> List[ConfigEntry]:
    """The 18 bench configurations, verbatim."""
    return [ConfigEntry(*row) for row in _EMBEDDED_ROWS]


def _flag(value: str, column: str, label: str) -> int:
    if value not in ("0", "1"):
        raise ConfigTableError(f"row {label!r}: {column}={value!r} is not 0 or 1")
    return int(value)


def load_config_table(path: Union[str, Path]) -> List[ConfigEntry]:
    """
    Load a configuration table that overrides the embedded one.

    Args:
        path: CSV file with header ``label,a_hwp1,...,alice_angle,bob_angle``

    Raises:
        ConfigTableError: If the file is missing or any row is malformed
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigTableError(f"configuration table {path} not found")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise ConfigTableError(f"cannot parse configuration table {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigTableError(f"configuration table {path} is not UTF-8: {exc}") from exc
    df = df.fillna("")
    if list(df.columns) != CONFIG_TABLE_COLUMNS:
        raise ConfigTableError(f"configuration table header must be {','.join(CONFIG_TABLE_COLUMNS)}")

    entries = []
    for row in df.itertuples(index=False, name=None):
        label = row[0].strip()
        if len(label) != 1 or not label.isalpha() or not label.isupper():
            raise ConfigTableError(f"configuration label {label!r} is not a single capital letter")
        flags = [_flag(v.strip(), c, label) for v, c in zip(row[1:8], CONFIG_TABLE_COLUMNS[1:8])]
        try:
            angles = [float(v) for v in row[8:10]]
        except ValueError as exc:
            raise ConfigTableError(f"row {label!r}: angle is not a number") from exc
        if not all(math.isfinite(a) for a in angles):
            raise ConfigTableError(f"row {label!r}: angle is not finite")
        entries.append(ConfigEntry(label, *flags, *angles))

    labels = [e.label for e in entries]
    if not entries or len(set(labels)) != len(labels):
        raise ConfigTableError("configuration labels must be present and unique")
    logger.info(f"Loaded {len(entries)} configurations from {path}")
    return entries


def alice_optics(entry: ConfigEntry) -> JonesMatrix:
    elements = [hwp_matrix(entry.alice_angle_deg / 2.0)]
    if entry.alice_qwp:
        elements.append(qwp_matrix(ALICE_QWP_AXIS_DEG))
    return compose(*elements)


def bob_analyzer(entry: ConfigEntry) -> JonesMatrix:
    elements = []
    if entry.bob_qwp:
        elements.append(qwp_matrix(BOB_QWP_AXIS_DEG))
    elements.append(hwp_matrix(entry.bob_angle_deg / 2.0))
    return compose(*elements)


def interpret_config(entry: ConfigEntry) -> ConfigInterpretation:
    """Alice's prepared state and Bob's basis for one configuration."""
    alice_state = classify(apply(alice_optics(entry), state_of(PolState.H)))
    pd0_state = classify(apply(dagger(bob_analyzer(entry)), state_of(PolState.H)))
    return ConfigInterpretation(
        label=entry.label,
        alice_state=alice_state,
        bob_basis=basis_of(pd0_state) if pd0_state else None,
        pd0_bit=bit_of(pd0_state) if pd0_state else None,
        unresolved=alice_state is None or pd0_state is None,
    )


def interpret_table(table: Optional[Sequence[ConfigEntry]] = None) -> List[ConfigInterpretation]:
    return [interpret_config(e) for e in (table if table is not None else embedded_config_table())]


def verify_config_table(table: Optional[Sequence[ConfigEntry]] = None) -> VerificationReport:
    """
    Interpret every configuration and check the derived bit against the
    printed Alice bit. Mismatches and unresolved rows are reported, never
    raised.
    """
    entries = table if table is not None else embedded_config_table()
    rows = []
    for entry in entries:
        interp = interpret_config(entry)
        derived = bit_of(interp.alice_state) if interp.alice_state else None
        rows.append(
            VerificationRow(
                label=entry.label,
                resolved=not interp.unresolved,
                alice_state=interp.alice_state,
                bob_basis=interp.bob_basis,
                printed_bit=entry.alice_bit,
                derived_bit=derived,
                consistency_with_alice_bit=derived == entry.alice_bit,
            )
        )
    report = VerificationReport(rows=tuple(rows))
    if report.unresolved:
        logger.warning(f"Unresolved configurations: {report.unresolved}")
    if report.mismatches:
        logger.info(f"Configurations whose derived bit differs from the printed bit: {report.mismatches}")
    return report


def label_map(interpretations: Iterable[ConfigInterpretation]) -> Dict[Tuple[PolState, Basis], ConfigInterpretation]:
    """(alice_state, bob_basis) -> first configuration realizing it."""
    out: Dict[Tuple[PolState, Basis], ConfigInterpretation] = {}
    for interp in interpretations:
        if not interp.unresolved:
            out.setdefault((interp.alice_state, interp.bob_basis), interp)
    return out


# --- pulse logs ---

def export_pulse_log(
    records: Sequence[PulseRecord],
    path: Union[str, Path],
    interpretations: Optional[Sequence[ConfigInterpretation]] = None,
) -> Path:
    """
    Write records as a pulse log.

    Raises:
        ConfigTableError: If no configuration realizes a record's
            (state, basis) pair
    """
    if interpretations is None:
        interpretations = interpret_table()
    by_pair = label_map(interpretations)
    with_eve = any(r.eve_basis is not None for r in records)

    rows = []
    for r in records:
        interp = by_pair.get((r.alice_state, r.bob_basis))
        if interp is None:
            raise ConfigTableError(f"no configuration prepares {r.alice_state} and measures in {r.bob_basis}")
        pd0 = 1 if r.bob_bit == interp.pd0_bit else 0
        row = [r.index, interp.label, pd0, 1 - pd0]
        if with_eve:
            row += [str(r.eve_basis) if r.eve_basis else "", "" if r.eve_bit is None else r.eve_bit]
        rows.append(row)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = PULSE_LOG_COLUMNS + (EVE_COLUMNS if with_eve else [])
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"Wrote {len(rows)} pulses to {path}")
    return path


def synthesize_pulse_log(
    config: SessionConfig,
    path: Union[str, Path],
    interpretations: Optional[Sequence[ConfigInterpretation]] = None,
    workers: int = 1,
) -> Tuple[List[PulseRecord], Path]:
    """Simulate a session and write it in the pulse-log schema."""
    records = run_session(config, workers=workers)
    return records, export_pulse_log(records, path, interpretations)


def _binary(value: str, column: str, line: int) -> int:
    value = value.strip()
    if value not in ("0", "1"):
        raise NonBinaryDetectorError(f"line {line}: {column}={value!r} is not 0 or 1")
    return int(value)


def _eve_fields(basis: str, bit: str, line: int) -> Tuple[Optional[Basis], Optional[int]]:
    basis, bit = basis.strip(), bit.strip()
    if basis == "" and bit == "":
        return None, None
    try:
        parsed_basis = Basis(basis)
    except ValueError as exc:
        raise MalformedRowError(f"line {line}: eve_basis={basis!r} is not one of HV, DA, RL") from exc
    if bit not in ("0", "1"):
        raise MalformedRowError(f"line {line}: eve_bit={bit!r} is not 0 or 1")
    return parsed_basis, int(bit)


def ingest_pulse_log(
    path: Union[str, Path],
    table: Optional[Sequence[ConfigEntry]] = None,
) -> Tuple[List[PulseLogRow], IngestDiagnostics]:
    """
    Read a pulse log in file order.

    Rows where not exactly one detector fired are dropped and counted in the
    diagnostics.

    Raises:
        PulseLogNotFoundError: If the file does not exist
        MalformedHeaderError: If the header does not match the schema
        MalformedRowError: If the file is not UTF-8 or a pulse index or Eve field cannot be parsed
        NonBinaryDetectorError: If a detector field is not 0 or 1
        UnknownConfigLabelError: If a label is not in the configuration table
    """
    path = Path(path)
    if not path.is_file():
        raise PulseLogNotFoundError(f"pulse log {path} not found")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise MalformedHeaderError(f"pulse log {path} is empty") from exc
    except pd.errors.ParserError as exc:
        raise MalformedRowError(f"cannot parse pulse log {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise MalformedRowError(f"pulse log {path} is not UTF-8: {exc}") from exc
    df = df.fillna("")

    columns = list(df.columns)
    if columns not in (PULSE_LOG_COLUMNS, PULSE_LOG_COLUMNS + EVE_COLUMNS):
        raise MalformedHeaderError(f"pulse log header {','.join(columns)!r} does not match the schema")
    with_eve = len(columns) == len(PULSE_LOG_COLUMNS) + len(EVE_COLUMNS)
    labels = {e.label for e in (table if table is not None else embedded_config_table())}

    rows: List[PulseLogRow] = []
    diagnostics = IngestDiagnostics()
    for line, values in enumerate(df.itertuples(index=False, name=None), start=2):
        diagnostics.total_rows += 1
        try:
            pulse_index = int(values[0])
        except ValueError as exc:
            raise MalformedRowError(f"line {line}: pulse_index={values[0]!r} is not an integer") from exc
        if pulse_index < 0:
            raise MalformedRowError(f"line {line}: negative pulse_index {pulse_index}")
        label = values[1].strip()
        if label not in labels:
            raise UnknownConfigLabelError(label)
        pd0 = _binary(values[2], "pd0", line)
        pd1 = _binary(values[3], "pd1", line)
        eve_basis, eve_bit = _eve_fields(values[4], values[5], line) if with_eve else (None, None)

        if pd0 + pd1 != 1:
            diagnostics.dropped += 1
            diagnostics.dropped_indices.append(pulse_index)
            continue
        rows.append(PulseLogRow(pulse_index, label, pd0, pd1, eve_basis, eve_bit))

    if diagnostics.dropped:
        logger.warning(f"Dropped {diagnostics.dropped} of {diagnostics.total_rows} rows without exactly one click")
    return rows, diagnostics


def replay(rows: Sequence[PulseLogRow], interpretations: Sequence[ConfigInterpretation]) -> ReplayResult:
    """
    Turn pulse-log rows back into records, then sift and build the matrix.

    Raises:
        NoDataError: If ``rows`` is empty
        UnknownConfigLabelError: If a label has no interpretation
        UnresolvedConfigError: If a label's interpretation is unresolved
    """
    if not rows:
        raise NoDataError("no pulse-log rows to replay")
    by_label = {i.label: i for i in interpretations}

    records = []
    for row in rows:
        interp = by_label.get(row.config_label)
        if interp is None:
            raise UnknownConfigLabelError(row.config_label)
        if interp.unresolved:
            raise UnresolvedConfigError(row.config_label)
        bob_bit = interp.pd0_bit if row.detector_pd0 == 1 else 1 - interp.pd0_bit
        records.append(
            PulseRecord(
                index=row.pulse_index,
                alice_bit=bit_of(interp.alice_state),
                alice_basis=basis_of(interp.alice_state),
                alice_state=interp.alice_state,
                eve_basis=row.eve_basis,
                eve_bit=row.eve_bit,
                bob_basis=interp.bob_basis,
                bob_bit=bob_bit,
                detector=Detector.for_bit(bob_bit),
            )
        )
    return ReplayResult(records, sift(records), correlation_matrix(records))
