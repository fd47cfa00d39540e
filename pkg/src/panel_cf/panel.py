from __future__ import annotations

import csv
import heapq
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Literal, Sequence, Union

import numpy as np
import pandas as pd

LOG = logging.getLogger(__name__)

Layout = Literal["units_as_rows", "long_format"]
TimeLabel = Union[int, str]

NA_TOKENS = ("", "NA")
VARIANCE_TOL = 1e-12


class DuplicateCell(ValueError): ...


class RaggedRow(ValueError): ...


class AllMissingUnit(ValueError): ...


class NonPositiveValue(ValueError): ...


class DegeneratePanel(ValueError): ...


def _freeze(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PanelMatrix:
    """N x T outcome matrix with unit ids (rows) and ordered time labels (columns).

    Integer labels must be strictly increasing. Text labels only need to be
    unique; their column order is the time order.

    Missing cells are NaN until imputation; `require_complete` guards the
    estimators, which need a finite matrix.
    """

    values: np.ndarray
    unit_ids: tuple[str, ...]
    time_labels: tuple[TimeLabel, ...]

    def __post_init__(self) -> None:
        values = _freeze(self.values)
        if values.ndim != 2:
            raise ValueError(f"values harus 2 dimensi, dapat {values.ndim}")
        n, t = values.shape
        if n < 2 or t < 2:
            raise DegeneratePanel(f"panel butuh N>=2 dan T>=2, dapat {n}x{t}")
        unit_ids = tuple(str(u) for u in self.unit_ids)
        time_labels = tuple(self.time_labels)
        if len(unit_ids) != n or len(time_labels) != t:
            raise ValueError(
                f"label tidak cocok dengan bentuk {n}x{t}: "
                f"{len(unit_ids)} unit, {len(time_labels)} periode"
            )
        if len(set(unit_ids)) != n:
            dupes = sorted({u for u in unit_ids if unit_ids.count(u) > 1})
            raise ValueError(f"unit id duplikat: {dupes}")
        if all(isinstance(lab, (int, np.integer)) for lab in time_labels):
            for a, b in zip(time_labels, time_labels[1:]):
                if not a < b:
                    raise ValueError(f"time labels harus naik tegas: {a!r} >= {b!r}")
        elif len(set(time_labels)) != t:
            dupes = sorted({str(x) for x in time_labels if time_labels.count(x) > 1})
            raise ValueError(f"time label duplikat: {dupes}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "time_labels", time_labels)

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def require_complete(self) -> "PanelMatrix":
        if not self.is_complete:
            bad = int((~np.isfinite(self.values)).sum())
            raise ValueError(f"panel masih punya {bad} sel kosong/non-finite; impute dulu")
        return self

    def with_values(self, values: np.ndarray) -> "PanelMatrix":
        return PanelMatrix(values, self.unit_ids, self.time_labels)

    def rows(self, index: Sequence[int]) -> "PanelMatrix":
        index = list(index)
        return PanelMatrix(
            self.values[index], tuple(self.unit_ids[i] for i in index), self.time_labels
        )

    def columns(self, stop: int) -> "PanelMatrix":
        return PanelMatrix(self.values[:, :stop], self.unit_ids, self.time_labels[:stop])

    def index_of(self, unit_ids: Iterable[str]) -> list[int]:
        lookup = {u: i for i, u in enumerate(self.unit_ids)}
        missing = [u for u in unit_ids if u not in lookup]
        if missing:
            raise ValueError(f"unit tidak ada di panel: {missing}")
        return [lookup[u] for u in unit_ids]

    def time_index(self, label: TimeLabel) -> int:
        for i, lab in enumerate(self.time_labels):
            if lab == label or str(lab) == str(label):
                return i
        raise ValueError(f"time label {label!r} tidak ada di panel")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.values,
            index=pd.Index(self.unit_ids, name="unit"),
            columns=list(self.time_labels),
        )


@dataclass(frozen=True, eq=False)
class TreatmentMask:
    """Simultaneous-adoption mask: treated units are exposed from column t0 onward."""

    treated: np.ndarray
    t0: int

    def __post_init__(self) -> None:
        treated = np.array(self.treated, dtype=bool, copy=True)
        treated.setflags(write=False)
        if treated.ndim != 1:
            raise ValueError("treated harus vektor 1 dimensi")
        if not treated.any() or treated.all():
            raise ValueError("mask butuh minimal satu unit treated dan satu kontrol")
        if int(self.t0) < 1:
            raise ValueError(f"t0 harus >= 1 (minimal satu pre-period), dapat {self.t0}")
        object.__setattr__(self, "treated", treated)
        object.__setattr__(self, "t0", int(self.t0))

    @classmethod
    def from_ids(
        cls, panel: PanelMatrix, treated_ids: Iterable[str], t0: int
    ) -> "TreatmentMask":
        treated = np.zeros(panel.n_units, dtype=bool)
        treated[panel.index_of(list(treated_ids))] = True
        mask = cls(treated, t0)
        mask.validate(panel)
        return mask

    @property
    def treated_index(self) -> np.ndarray:
        return np.flatnonzero(self.treated)

    @property
    def control_index(self) -> np.ndarray:
        return np.flatnonzero(~self.treated)

    def validate(self, panel: PanelMatrix) -> None:
        if self.treated.shape[0] != panel.n_units:
            raise ValueError(
                f"mask untuk {self.treated.shape[0]} unit, panel punya {panel.n_units}"
            )
        if not 1 <= self.t0 <= panel.n_periods - 1:
            raise ValueError(f"t0={self.t0} harus di [1, {panel.n_periods - 1}]")

    def expand(self, n_periods: int) -> np.ndarray:
        """W_it = 1 iff unit i treated and t >= t0."""
        w = np.zeros((self.treated.shape[0], n_periods), dtype=bool)
        w[np.ix_(self.treated, np.arange(self.t0, n_periods))] = True
        return w

    def observed(self, n_periods: int) -> np.ndarray:
        """The set O (cells carrying untreated outcomes) as a boolean matrix."""
        return ~self.expand(n_periods)


@dataclass(frozen=True, eq=False)
class SplitView:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    control_ids: tuple[str, ...] = field(default=())
    treated_ids: tuple[str, ...] = field(default=())
    post_labels: tuple[TimeLabel, ...] = field(default=())

    @property
    def n_controls(self) -> int:
        return self.x_train.shape[0]

    @property
    def n_treated(self) -> int:
        return self.x_test.shape[0]

    @property
    def t0(self) -> int:
        return self.x_train.shape[1]

    @property
    def t_post(self) -> int:
        return self.y_train.shape[1]


# ---------------------------------------------------------------- ingestion


def _read_csv(raw: bytes, **kwargs: Any) -> pd.DataFrame:
    # baris komentar (header artefak: config hash & seed) dan baris kosong dilewati
    try:
        return pd.read_csv(
            io.BytesIO(raw), comment="#", skipinitialspace=True, encoding="utf-8-sig", **kwargs
        )
    except pd.errors.EmptyDataError as exc:
        raise ValueError("CSV kosong") from exc
    except pd.errors.ParserError as exc:
        raise RaggedRow(f"baris tidak rata: {exc}") from exc


def _check_widths(raw: bytes) -> None:
    # pandas mengisi baris pendek dengan "" tanpa error, jadi jumlah kolom dicek di sini
    lines = [
        (no, line)
        for no, line in enumerate(raw.decode("utf-8-sig").splitlines(), start=1)
        if line.strip() and not line.startswith("#")
    ]
    if not lines:
        return
    rows = csv.reader(line for _, line in lines)
    width = len(next(rows))
    for (no, _), row in zip(lines[1:], rows):
        if len(row) != width:
            raise RaggedRow(f"baris {no}: {len(row)} kolom, header punya {width}")


def _read_cells(raw: bytes) -> pd.DataFrame:
    """Every field as stripped text, header row included."""
    _check_widths(raw)
    cells = _read_csv(raw, header=None, dtype=str, keep_default_na=False)
    if len(cells) < 2:
        raise ValueError("CSV butuh header dan minimal satu baris data")
    return cells.apply(lambda col: col.str.strip())


def _read_numbers(raw: bytes, width: int) -> pd.DataFrame:
    frame = _read_csv(
        raw,
        header=0,
        names=list(range(width)),
        dtype={0: str},
        na_values=list(NA_TOKENS),
        keep_default_na=False,
        float_precision="round_trip",
    )
    return frame.iloc[:, 1:]


def _as_float(frame: pd.DataFrame) -> np.ndarray:
    bad = (frame.apply(pd.to_numeric, errors="coerce").isna() & frame.notna()).to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValueError(f"baris data ke-{row + 1}: nilai bukan angka {frame.iat[row, col]!r}")
    return frame.to_numpy(dtype=float)


def _parse_time_labels(labels: Sequence[str]) -> list[TimeLabel]:
    stripped = [lab.strip() for lab in labels]
    try:
        return [int(lab) for lab in stripped]
    except ValueError:
        return stripped


def _check_unique_units(unit_ids: Sequence[str]) -> None:
    seen: dict[str, int] = {}
    for row, unit in enumerate(unit_ids, start=1):
        if unit in seen:
            raise DuplicateCell(
                f"baris data ke-{row}: unit {unit!r} sudah muncul di baris ke-{seen[unit]}"
            )
        seen[unit] = row


def _load_rectangular(raw: bytes) -> PanelMatrix:
    cells = _read_cells(raw)
    unit_ids = cells.iloc[1:, 0].tolist()
    _check_unique_units(unit_ids)
    labels = tuple(_parse_time_labels(cells.iloc[0, 1:].tolist()))
    values = _as_float(_read_numbers(raw, cells.shape[1]))
    return PanelMatrix(values, tuple(unit_ids), labels)


def _text_time_order(frame: pd.DataFrame) -> list[TimeLabel]:
    """Merge the order in which each unit lists its text labels.

    Labels no unit orders against each other keep first-appearance order;
    units that contradict each other are rejected.
    """
    labels = list(dict.fromkeys(frame["time"]))
    first_seen = {lab: k for k, lab in enumerate(labels)}
    after: dict[str, set[str]] = {lab: set() for lab in labels}
    for _, seq in frame.groupby("unit", sort=False)["time"]:
        seq = seq.tolist()
        for a, b in zip(seq, seq[1:]):
            after[a].add(b)
    indegree = dict.fromkeys(labels, 0)
    for targets in after.values():
        for b in targets:
            indegree[b] += 1

    ready = [first_seen[lab] for lab in labels if indegree[lab] == 0]
    heapq.heapify(ready)
    order: list[TimeLabel] = []
    while ready:
        lab = labels[heapq.heappop(ready)]
        order.append(lab)
        for b in after[lab]:
            indegree[b] -= 1
            if indegree[b] == 0:
                heapq.heappush(ready, first_seen[b])
    if len(order) != len(labels):
        stuck = sorted(lab for lab in labels if indegree[lab] > 0)
        raise ValueError(f"urutan waktu antar unit saling bertentangan: {stuck}")
    return order


def _load_long(raw: bytes) -> PanelMatrix:
    cells = _read_cells(raw)
    header = [h.lower() for h in cells.iloc[0]]
    if header != ["unit", "time", "value"]:
        raise ValueError(f"format long butuh header unit,time,value; dapat {cells.iloc[0].tolist()}")
    units = cells.iloc[1:, 0].tolist()
    times = _parse_time_labels(cells.iloc[1:, 1].tolist())
    numeric = all(isinstance(lab, int) for lab in times)
    df = pd.DataFrame({"unit": units, "time": times})

    dup = df.duplicated(subset=["unit", "time"], keep="first").to_numpy()
    if dup.any():
        row = int(np.flatnonzero(dup)[0])
        raise DuplicateCell(
            f"baris data ke-{row + 1}: sel duplikat ({df.at[row, 'unit']}, {df.at[row, 'time']})"
        )

    # label integer diurutkan numerik; label teks mengikuti urutan di file
    order = sorted(set(times)) if numeric else _text_time_order(df)
    df["value"] = _as_float(_read_numbers(raw, 3).iloc[:, [1]])[:, 0]
    unit_order = list(dict.fromkeys(units))
    wide = df.pivot(index="unit", columns="time", values="value").reindex(
        index=unit_order, columns=order
    )
    return PanelMatrix(wide.to_numpy(dtype=float), tuple(unit_order), tuple(order))


def load_panel(source: Union[BinaryIO, bytes], layout: Layout = "units_as_rows") -> PanelMatrix:
    """Parse a UTF-8 CSV into a PanelMatrix; empty fields and `NA` become NaN."""
    raw = source if isinstance(source, bytes) else source.read()
    if layout == "units_as_rows":
        panel = _load_rectangular(raw)
    elif layout == "long_format":
        panel = _load_long(raw)
    else:
        raise ValueError(f"layout tidak dikenal: {layout!r}")
    LOG.info(
        "Loaded panel %dx%d (%d missing cells)",
        panel.n_units,
        panel.n_periods,
        int(np.isnan(panel.values).sum()),
    )
    return panel


def read_panel(path: Union[str, Path], layout: Layout = "units_as_rows") -> PanelMatrix:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"CSV panel tidak ditemukan: {p}")
    with p.open("rb") as fh:
        return load_panel(fh, layout)


def panel_to_csv(panel: PanelMatrix, header: str = "") -> str:
    frame = panel.to_frame()
    # 17 digit signifikan cukup untuk round-trip double secara bit-exact
    return header + frame.to_csv(float_format="%.17g", na_rep="NA", lineterminator="\n")


def save_panel(panel: PanelMatrix, path: Union[str, Path], header: str = "") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(panel_to_csv(panel, header), encoding="utf-8")
    LOG.info("Saved panel -> %s", p)
    return p


# ---------------------------------------------------------------- transforms


def impute_locf_nocb(panel: PanelMatrix, boundary: int) -> PanelMatrix:
    """Fill gaps forward then backward, separately before and after `boundary`.

    A segment with no observation at all is filled from the other segment as a
    last resort, so the result never keeps a NaN.
    """
    n_periods = panel.n_periods
    if not 0 <= boundary <= n_periods:
        raise ValueError(f"boundary {boundary} di luar [0, {n_periods}]")
    frame = pd.DataFrame(panel.values)
    empty = frame.isna().all(axis=1)
    if empty.any():
        unit = panel.unit_ids[int(np.flatnonzero(empty.to_numpy())[0])]
        raise AllMissingUnit(f"unit {unit!r} tidak punya satu pun observasi")

    segments = [frame.iloc[:, :boundary], frame.iloc[:, boundary:]]
    filled = pd.concat(
        [seg.ffill(axis=1).bfill(axis=1) for seg in segments if seg.shape[1] > 0], axis=1
    )
    filled = filled.ffill(axis=1).bfill(axis=1)
    n_filled = int(frame.isna().sum().sum())
    if n_filled:
        LOG.info("Imputed %d missing cells (boundary=%d)", n_filled, boundary)
    return panel.with_values(filled.to_numpy(dtype=float))


def log_transform(panel: PanelMatrix) -> PanelMatrix:
    values = panel.values
    bad = np.argwhere(values <= 0)
    if bad.size:
        i, t = (int(v) for v in bad[0])
        raise NonPositiveValue(
            f"nilai {values[i, t]!r} <= 0 di sel ({panel.unit_ids[i]}, {panel.time_labels[t]})"
        )
    return panel.with_values(np.log(values))


def drop_units(panel: PanelMatrix, unit_ids: Iterable[str]) -> PanelMatrix:
    drop = set(panel.index_of(list(unit_ids)))
    keep = [i for i in range(panel.n_units) if i not in drop]
    if len(keep) < 2:
        raise DegeneratePanel("setelah drop, panel tinggal kurang dari 2 unit")
    return panel.rows(keep)


def drop_zero_variance_pre(
    panel: PanelMatrix, mask: TreatmentMask
) -> tuple[PanelMatrix, list[str]]:
    mask.validate(panel)
    pre = panel.values[:, : mask.t0]
    var = np.nanvar(pre, axis=1)
    keep = [i for i in range(panel.n_units) if var[i] >= VARIANCE_TOL]
    dropped = [panel.unit_ids[i] for i in range(panel.n_units) if var[i] < VARIANCE_TOL]
    if len(keep) < 2:
        raise DegeneratePanel(
            f"hanya {len(keep)} unit dengan variansi pre-period; butuh minimal 2"
        )
    if dropped:
        LOG.info("Dropped %d zero-variance units: %s", len(dropped), ", ".join(dropped))
    return panel.rows(keep), dropped


def split(panel: PanelMatrix, mask: TreatmentMask) -> SplitView:
    mask.validate(panel)
    values = panel.values
    ctrl, trt, t0 = mask.control_index, mask.treated_index, mask.t0
    return SplitView(
        x_train=values[ctrl, :t0],
        y_train=values[ctrl, t0:],
        x_test=values[trt, :t0],
        y_test=values[trt, t0:],
        control_ids=tuple(panel.unit_ids[i] for i in ctrl),
        treated_ids=tuple(panel.unit_ids[i] for i in trt),
        post_labels=tuple(panel.time_labels[t0:]),
    )
