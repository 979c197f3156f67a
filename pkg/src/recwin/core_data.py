"""Subject-level event histories and counting-process CSV input/output.

A subject is a follow-up window with an ordered list of recurrent-event
times, an optional death time, baseline covariates and an optional stratum
label.  Times are 64-bit floats in whatever unit the caller uses; no unit
conversion happens anywhere in the package.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

from . import errors


class Arm(enum.Enum):
    CONTROL = 0
    EXPERIMENTAL = 1


@dataclass(frozen=True)
class SubjectHistory:
    """One subject's observed history on the calendar time scale.

    ``follow_up`` is ``death_time`` when death was observed and
    ``censor_time`` otherwise; the constructor enforces the ordering
    invariants and rejects malformed records with typed errors.
    """

    id: str
    arm: Arm
    recurrent_times: tuple[float, ...]
    censor_time: float
    death_time: Optional[float] = None
    covariates: Mapping[str, float] = field(default_factory=dict)
    stratum: Optional[str] = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.recurrent_times)
        object.__setattr__(self, "recurrent_times", times)
        for t in times + (self.censor_time,) + (
            (self.death_time,) if self.death_time is not None else ()
        ):
            if not math.isfinite(t) or t <= 0.0:
                raise errors.NegativeTime(f"subject {self.id}: time {t!r} not a positive finite real")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise errors.NonMonotoneTimes(f"subject {self.id}: recurrent times not strictly increasing")
        if self.death_time is not None and self.death_time > self.censor_time:
            raise errors.DeathAfterCensor(
                f"subject {self.id}: death {self.death_time} after censoring {self.censor_time}"
            )
        if times and times[-1] > self.follow_up:
            raise errors.EventAfterFollowUp(
                f"subject {self.id}: recurrence at {times[-1]} after follow-up {self.follow_up}"
            )

    @property
    def follow_up(self) -> float:
        """min(censor, death): the observed end of follow-up X."""
        return self.censor_time if self.death_time is None else self.death_time

    @property
    def died(self) -> bool:
        return self.death_time is not None

    def n_events_by(self, t: float) -> int:
        """Counting-process view N_H(t) = #{j : T_j <= t}."""
        k = 0
        for tj in self.recurrent_times:
            if tj > t:
                break
            k += 1
        return k


def validate_history(raw: Mapping) -> SubjectHistory:
    """Build a validated SubjectHistory from a raw record.

    Accepted keys: id, arm (0/1 or Arm), recurrent_times, censor_time,
    death_time (optional/None), covariates, stratum.
    """
    arm = raw["arm"]
    if not isinstance(arm, Arm):
        arm = Arm(int(arm))
    return SubjectHistory(
        id=str(raw["id"]),
        arm=arm,
        recurrent_times=tuple(raw.get("recurrent_times", ())),
        censor_time=float(raw["censor_time"]),
        death_time=None if raw.get("death_time") is None else float(raw["death_time"]),
        covariates=dict(raw.get("covariates", {})),
        stratum=raw.get("stratum"),
    )


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of subjects; the unit of analysis."""

    subjects: tuple[SubjectHistory, ...]

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise errors.DuplicateSubjectId("duplicate subject ids in dataset")

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def n_experimental(self) -> int:
        return sum(s.arm is Arm.EXPERIMENTAL for s in self.subjects)

    @property
    def n_control(self) -> int:
        return self.n - self.n_experimental

    def by_arm(self) -> tuple[list[SubjectHistory], list[SubjectHistory]]:
        """(experimental, control) subject lists in dataset order."""
        exp = [s for s in self.subjects if s.arm is Arm.EXPERIMENTAL]
        ctl = [s for s in self.subjects if s.arm is Arm.CONTROL]
        return exp, ctl

    def stratum_sizes(self, by: Optional[str] = None) -> dict[str, int]:
        """Stratum label -> size.  ``by=None`` uses the stratum field,
        otherwise labels come from the named baseline covariate."""
        sizes: dict[str, int] = {}
        for s in self.subjects:
            sizes[stratum_label(s, by)] = sizes.get(stratum_label(s, by), 0) + 1
        return sizes

    def covariate_names(self) -> list[str]:
        names: list[str] = []
        for s in self.subjects:
            for k in s.covariates:
                if k not in names:
                    names.append(k)
        return names


def stratum_label(subject: SubjectHistory, by: Optional[str]) -> str:
    if by is None:
        return subject.stratum if subject.stratum is not None else ""
    try:
        v = subject.covariates[by]
    except KeyError:
        raise errors.MissingColumn(f"subject {subject.id} has no covariate {by!r}")
    return repr(v)


# ---------------------------------------------------------------------------
# CSV schema A: counting-process rows (id, tstart, tstop, event, death, trt,
# covariates..., optional stratum)
# ---------------------------------------------------------------------------

_SCHEMA_A_CORE = ("id", "tstart", "tstop", "event", "death", "trt")


def load_counting_process_csv(
    stream: TextIO,
    column_map: Optional[Mapping[str, str]] = None,
    stratum_column: Optional[str] = None,
) -> Dataset:
    """Parse counting-process rows into a validated Dataset.

    ``column_map`` remaps logical names (e.g. {"tstart": "t.start"}).
    Rows for a subject must be interval-contiguous; the death indicator may
    appear only on the subject's final row.
    """
    cmap = {k: k for k in _SCHEMA_A_CORE}
    if column_map:
        cmap.update(column_map)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise errors.MissingColumn("empty CSV: no header row")
    for logical, col in cmap.items():
        if col not in reader.fieldnames:
            raise errors.MissingColumn(f"missing column {col!r} (for {logical!r})")
    reserved = set(cmap.values())
    covariate_cols = [c for c in reader.fieldnames if c not in reserved and c != stratum_column]

    groups: dict[str, list[dict]] = {}
    order: list[str] = []
    for row in reader:
        sid = row[cmap["id"]]
        if sid not in groups:
            groups[sid] = []
            order.append(sid)
        groups[sid].append(row)

    subjects = []
    for sid in order:
        rows = sorted(groups[sid], key=lambda r: float(r[cmap["tstart"]]))
        recurrent = []
        death_rows = [i for i, r in enumerate(rows) if int(r[cmap["death"]]) == 1]
        if death_rows and (len(death_rows) > 1 or death_rows[0] != len(rows) - 1):
            raise errors.MultipleDeathRows(f"subject {sid}: death flag off the final row")
        prev_stop = None
        for r in rows:
            tstart, tstop = float(r[cmap["tstart"]]), float(r[cmap["tstop"]])
            if prev_stop is not None and tstart != prev_stop:
                raise errors.GapOrOverlapInIntervals(
                    f"subject {sid}: interval starts at {tstart}, previous ended at {prev_stop}"
                )
            prev_stop = tstop
            if int(r[cmap["event"]]) == 1:
                recurrent.append(tstop)
        last = rows[-1]
        follow_up = float(last[cmap["tstop"]])
        died = bool(death_rows)
        subjects.append(
            SubjectHistory(
                id=sid,
                arm=Arm(int(rows[0][cmap["trt"]])),
                recurrent_times=tuple(recurrent),
                censor_time=follow_up,
                death_time=follow_up if died else None,
                covariates={c: float(rows[0][c]) for c in covariate_cols},
                stratum=rows[0][stratum_column] if stratum_column else None,
            )
        )
    return Dataset(tuple(subjects))


def export_counting_process(
    dataset: Dataset,
    stream: TextIO,
    stratum_column: Optional[str] = None,
) -> None:
    """Write schema-A rows; load(export(D)) == D up to row ordering.

    Floats are written with repr so the round trip is bit-exact.  For
    deceased subjects the latent censoring time is not observable in
    counting-process form, so it reloads as the death time.
    """
    cov_names = dataset.covariate_names()
    header = list(_SCHEMA_A_CORE) + cov_names + ([stratum_column] if stratum_column else [])
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for s in dataset.subjects:
        bounds = [0.0] + list(s.recurrent_times) + [s.follow_up]
        # a zero-recurrence subject still gets its single censoring/death row
        if s.recurrent_times and s.recurrent_times[-1] == s.follow_up:
            bounds = bounds[:-1]
        for k in range(len(bounds) - 1):
            is_last = k == len(bounds) - 2
            is_event = (not is_last) or (bounds[k + 1] in s.recurrent_times)
            row = [
                s.id,
                repr(bounds[k]),
                repr(bounds[k + 1]),
                int(is_event),
                int(is_last and s.died),
                s.arm.value,
            ]
            row += [repr(float(s.covariates.get(c, 0.0))) for c in cov_names]
            if stratum_column:
                row.append(s.stratum if s.stratum is not None else "")
            writer.writerow(row)


# ---------------------------------------------------------------------------
# CSV schema B: one wide row per subject (simulator convenience format)
# ---------------------------------------------------------------------------

_SCHEMA_B_CORE = ("id", "trt", "censor_time", "death_time", "recurrent_times")


def load_wide_csv(stream: TextIO, stratum_column: Optional[str] = None) -> Dataset:
    """Parse schema-B rows: id, trt, censor_time, death_time (empty if
    none), recurrent_times as a semicolon-separated list; extra columns are
    covariates."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise errors.MissingColumn("empty CSV: no header row")
    for col in _SCHEMA_B_CORE:
        if col not in reader.fieldnames:
            raise errors.MissingColumn(f"missing column {col!r}")
    cov_cols = [c for c in reader.fieldnames if c not in _SCHEMA_B_CORE and c != stratum_column]
    subjects = []
    for row in reader:
        times = tuple(float(t) for t in row["recurrent_times"].split(";") if t != "")
        subjects.append(
            SubjectHistory(
                id=row["id"],
                arm=Arm(int(row["trt"])),
                recurrent_times=times,
                censor_time=float(row["censor_time"]),
                death_time=float(row["death_time"]) if row["death_time"] != "" else None,
                covariates={c: float(row[c]) for c in cov_cols},
                stratum=row[stratum_column] if stratum_column else None,
            )
        )
    return Dataset(tuple(subjects))


def export_wide_csv(dataset: Dataset, stream: TextIO, stratum_column: Optional[str] = None) -> None:
    cov_names = dataset.covariate_names()
    header = list(_SCHEMA_B_CORE) + cov_names + ([stratum_column] if stratum_column else [])
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for s in dataset.subjects:
        row = [
            s.id,
            s.arm.value,
            repr(s.censor_time),
            "" if s.death_time is None else repr(s.death_time),
            ";".join(repr(t) for t in s.recurrent_times),
        ]
        row += [repr(float(s.covariates.get(c, 0.0))) for c in cov_names]
        if stratum_column:
            row.append(s.stratum if s.stratum is not None else "")
        writer.writerow(row)
