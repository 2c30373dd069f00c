"""Object-level detection scoring with area-recall/area-precision matrices.

For ground truths G and detections D, sigma[i,j] = |Gi ∩ Dj| / |Gi| and
tau[i,j] = |Gi ∩ Dj| / |Dj|.  A pair is "ok" when sigma >= t_r and
tau >= t_p.  Matches come in three kinds:

- one-to-one: (i, j) is ok and is the only ok element in row i and column j;
- split: ground truth i against S_o = {j : tau[i,j] >= t_p} when
  sum(sigma[i, S_o]) >= t_r and |S_o| >= 2;
- merge: detection j against S_m = {i : sigma[i,j] >= t_r} when
  sum(tau[S_m, j]) >= t_p and |S_m| >= 2.

Recall is the mean over G of Match_G (1 for one matched detection, k for
several, 0 for none); precision is the symmetric mean over D.  The three
match conditions are not mutually exclusive; scoring counts every satisfied
relation (which keeps recall/precision monotone in the thresholds for
k = 1), while the reported classification labels one kind per polygon with
one-to-one taking precedence.  A detection satisfying the split per-element
condition for several ground truths is credited to its best-supported one
(largest tau, ties to the lowest index); the mirror rule applies to a
ground truth covered by several merges.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class EvalConfig:
    t_r: float = 0.5
    t_p: float = 0.5
    k: float = 1.0

    def __post_init__(self):
        for name in ("t_r", "t_p", "k"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass
class MatchMatrices:
    sigma: np.ndarray  # (|G|, |D|) area recall
    tau: np.ndarray  # (|G|, |D|) area precision
    gt_areas: np.ndarray
    det_areas: np.ndarray
    rasterized_pairs: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class Assignment:
    kind: str  # 'none' | 'one_to_one' | 'split' | 'merge'
    targets: frozenset[int]

    @classmethod
    def none(cls) -> "Assignment":
        return cls(kind="none", targets=frozenset())


@dataclass(frozen=True)
class MatchClassification:
    gt: tuple[Assignment, ...]  # per ground truth: none | one_to_one | split
    det: tuple[Assignment, ...]  # per detection: none | one_to_one | merge


@dataclass
class ImageScore:
    image_id: str
    n_gt: int
    n_det: int
    precision: float | None
    recall: float | None
    f1: float | None
    one_to_one: int = 0
    splits: int = 0
    merges: int = 0


@dataclass
class RowAggregate:
    n_images: int
    precision: float | None
    recall: float | None
    f1: float | None
    one_to_one: int
    splits: int
    merges: int


@dataclass
class EvalReport:
    images: list[ImageScore]
    series: dict[str, RowAggregate]
    overall: RowAggregate
    config: EvalConfig


class PolygonAreaError(ValueError):
    """Input polygons with (effectively) zero area, by index."""

    def __init__(self, which: str, indices: list[int]):
        super().__init__(f"{which} polygons with zero area at indices {indices}")
        self.which = which
        self.indices = indices


def _to_geometry(poly):
    """Shapely geometry from a BoundingPolygon or a vertex sequence;
    self-intersecting rings are repaired to their even-odd filled region."""
    from shapely.geometry import Polygon as ShapelyPolygon
    from shapely.validation import make_valid

    vertices = getattr(poly, "vertices", poly)
    shape = ShapelyPolygon([(float(x), float(y)) for x, y in vertices])
    if not shape.is_valid:
        shape = make_valid(shape)
        if shape.geom_type == "GeometryCollection":
            from shapely.ops import unary_union

            shape = unary_union([g for g in shape.geoms
                                 if g.geom_type in ("Polygon", "MultiPolygon")])
    return shape


def _rasterized_intersection(a, b) -> float:
    """Pixel-count fallback when the clipper rejects a pair."""
    import shapely

    minx = min(a.bounds[0], b.bounds[0])
    miny = min(a.bounds[1], b.bounds[1])
    maxx = max(a.bounds[2], b.bounds[2])
    maxy = max(a.bounds[3], b.bounds[3])
    n = 256
    xs = np.linspace(minx, maxx, n)
    ys = np.linspace(miny, maxy, n)
    gx, gy = np.meshgrid(xs, ys)
    hits = shapely.contains_xy(a, gx.ravel(), gy.ravel()) \
        & shapely.contains_xy(b, gx.ravel(), gy.ravel())
    cell = ((maxx - minx) / (n - 1)) * ((maxy - miny) / (n - 1))
    return float(hits.sum()) * cell


def build_matrices(gts: Sequence, dets: Sequence) -> MatchMatrices:
    """Area recall/precision matrices via exact polygon clipping."""
    g_shapes = [_to_geometry(p) for p in gts]
    d_shapes = [_to_geometry(p) for p in dets]
    g_areas = np.array([s.area for s in g_shapes])
    d_areas = np.array([s.area for s in d_shapes])
    bad_g = [i for i, a in enumerate(g_areas) if a <= 0.0]
    bad_d = [j for j, a in enumerate(d_areas) if a <= 0.0]
    if bad_g:
        raise PolygonAreaError("ground-truth", bad_g)
    if bad_d:
        raise PolygonAreaError("detection", bad_d)

    sigma = np.zeros((len(gts), len(dets)))
    tau = np.zeros((len(gts), len(dets)))
    fallback: list[tuple[int, int]] = []
    for i, g in enumerate(g_shapes):
        gb = g.bounds
        for j, d in enumerate(d_shapes):
            db = d.bounds
            if gb[2] <= db[0] or db[2] <= gb[0] or gb[3] <= db[1] or db[3] <= gb[1]:
                continue
            try:
                inter = g.intersection(d).area
            except Exception:
                inter = _rasterized_intersection(g, d)
                fallback.append((i, j))
            sigma[i, j] = inter / g_areas[i]
            tau[i, j] = inter / d_areas[j]
    return MatchMatrices(sigma=sigma, tau=tau, gt_areas=g_areas,
                         det_areas=d_areas, rasterized_pairs=fallback)


@dataclass
class MatchRelations:
    """Every literally-satisfied match relation, without precedence."""

    one_to_one: set[tuple[int, int]]
    splits: dict[int, frozenset[int]]  # gt index -> S_o
    merges: dict[int, frozenset[int]]  # det index -> S_m


def match_relations(m: MatchMatrices, cfg: EvalConfig) -> MatchRelations:
    ok = (m.sigma >= cfg.t_r) & (m.tau >= cfg.t_p)
    row_ok = ok.sum(axis=1)
    col_ok = ok.sum(axis=0)
    n_g, n_d = ok.shape

    one_to_one = {(int(i), int(j)) for i, j in zip(*np.nonzero(ok))
                  if row_ok[i] == 1 and col_ok[j] == 1}
    splits: dict[int, frozenset[int]] = {}
    for i in range(n_g):
        s_o = np.nonzero(m.tau[i] >= cfg.t_p)[0]
        if s_o.size >= 2 and m.sigma[i, s_o].sum() >= cfg.t_r:
            splits[i] = frozenset(int(j) for j in s_o)
    merges: dict[int, frozenset[int]] = {}
    for j in range(n_d):
        s_m = np.nonzero(m.sigma[:, j] >= cfg.t_r)[0]
        if s_m.size >= 2 and m.tau[s_m, j].sum() >= cfg.t_p:
            merges[j] = frozenset(int(i) for i in s_m)
    return MatchRelations(one_to_one=one_to_one, splits=splits, merges=merges)


def classify_matches(m: MatchMatrices, cfg: EvalConfig) -> MatchClassification:
    """One label per polygon; one-to-one takes precedence over split/merge."""
    rel = match_relations(m, cfg)
    n_g, n_d = m.sigma.shape

    gt_assign = [Assignment.none() for _ in range(n_g)]
    det_assign = [Assignment.none() for _ in range(n_d)]
    for i, j in rel.one_to_one:
        gt_assign[i] = Assignment(kind="one_to_one", targets=frozenset({j}))
        det_assign[j] = Assignment(kind="one_to_one", targets=frozenset({i}))
    for i, s_o in rel.splits.items():
        if gt_assign[i].kind == "none":
            gt_assign[i] = Assignment(kind="split", targets=s_o)
    for j, s_m in rel.merges.items():
        if det_assign[j].kind == "none":
            det_assign[j] = Assignment(kind="merge", targets=s_m)
    return MatchClassification(gt=tuple(gt_assign), det=tuple(det_assign))


def _match_value(count: int, k: float) -> float:
    if count == 0:
        return 0.0
    if count == 1:
        return 1.0
    return k


def score_from_matrices(m: MatchMatrices, cfg: EvalConfig,
                        ) -> tuple[float | None, float | None, float | None,
                                   MatchClassification]:
    """(recall, precision, f1, classification); recall/precision are None
    when the respective input set is empty.

    A polygon's Match value counts the polygons it matches through any
    satisfied relation.  Detections matched through splits are credited to
    their best-supported ground truth only (largest tau, ties to the lowest
    index); mirror rule for ground truths under several merges (largest
    sigma).
    """
    rel = match_relations(m, cfg)
    n_g, n_d = m.sigma.shape

    split_parent: dict[int, int] = {}
    for i, s_o in rel.splits.items():
        for j in s_o:
            cur = split_parent.get(j)
            if cur is None or (m.tau[i, j], -i) > (m.tau[cur, j], -cur):
                split_parent[j] = i
    merge_parent: dict[int, int] = {}
    for j, s_m in rel.merges.items():
        for i in s_m:
            cur = merge_parent.get(i)
            if cur is None or (m.sigma[i, j], -j) > (m.sigma[i, cur], -cur):
                merge_parent[i] = j

    oo_by_gt: dict[int, int] = {i: j for i, j in rel.one_to_one}
    oo_by_det: dict[int, int] = {j: i for i, j in rel.one_to_one}

    recall = None
    if n_g > 0:
        total = 0.0
        for i in range(n_g):
            matched: set[int] = set(rel.splits.get(i, ()))
            if i in oo_by_gt:
                matched.add(oo_by_gt[i])
            if i in merge_parent:
                matched.add(merge_parent[i])
            total += _match_value(len(matched), cfg.k)
        recall = total / n_g
    precision = None
    if n_d > 0:
        total = 0.0
        for j in range(n_d):
            matched = set(rel.merges.get(j, ()))
            if j in oo_by_det:
                matched.add(oo_by_det[j])
            if j in split_parent:
                matched.add(split_parent[j])
            total += _match_value(len(matched), cfg.k)
        precision = total / n_d

    if recall is None or precision is None:
        f1 = None
    elif precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return recall, precision, f1, classify_matches(m, cfg)


def score(gts: Sequence, dets: Sequence, cfg: EvalConfig = EvalConfig(),
          image_id: str = "") -> ImageScore:
    if len(gts) == 0 and len(dets) == 0:
        return ImageScore(image_id=image_id, n_gt=0, n_det=0,
                          precision=None, recall=None, f1=None)
    m = build_matrices(gts, dets)
    recall, precision, f1, cls = score_from_matrices(m, cfg)
    return ImageScore(
        image_id=image_id, n_gt=len(gts), n_det=len(dets),
        precision=precision, recall=recall, f1=f1,
        one_to_one=sum(1 for a in cls.gt if a.kind == "one_to_one"),
        splits=sum(1 for a in cls.gt if a.kind == "split"),
        merges=sum(1 for a in cls.det if a.kind == "merge"),
    )


def sweep(gts: Sequence, dets: Sequence, t_r_grid: Sequence[float],
          t_p_grid: Sequence[float], k: float = 1.0) -> np.ndarray:
    """F1 per (t_r, t_p) cell; rows follow t_r ascending, columns t_p
    ascending.  Cells are NaN when F1 is undefined (an empty input set)."""
    if not len(t_r_grid) or not len(t_p_grid):
        raise ValueError("threshold grids must be non-empty")
    t_rs = sorted(float(t) for t in t_r_grid)
    t_ps = sorted(float(t) for t in t_p_grid)
    m = build_matrices(gts, dets) if (len(gts) and len(dets)) else None
    out = np.full((len(t_rs), len(t_ps)), np.nan)
    for a, t_r in enumerate(t_rs):
        for b, t_p in enumerate(t_ps):
            if m is None:
                continue
            _, _, f1, _ = score_from_matrices(m, EvalConfig(t_r=t_r, t_p=t_p, k=k))
            out[a, b] = np.nan if f1 is None else f1
    return out


def _mean_defined(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _aggregate_rows(scores: list[ImageScore]) -> RowAggregate:
    return RowAggregate(
        n_images=len(scores),
        precision=_mean_defined(s.precision for s in scores),
        recall=_mean_defined(s.recall for s in scores),
        f1=_mean_defined(s.f1 for s in scores),
        one_to_one=sum(s.one_to_one for s in scores),
        splits=sum(s.splits for s in scores),
        merges=sum(s.merges for s in scores),
    )


def aggregate(per_image: list[ImageScore],
              grouping: dict[str, str] | Callable[[str], str] | None = None,
              cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Per-series arithmetic means plus the overall row, which averages over
    all images (not over series means)."""
    if not per_image:
        raise ValueError("no image scores to aggregate")

    def series_of(image_id: str) -> str:
        if grouping is None:
            return "all"
        if callable(grouping):
            return grouping(image_id)
        return grouping.get(image_id, "unassigned")

    by_series: dict[str, list[ImageScore]] = {}
    for s in per_image:
        by_series.setdefault(series_of(s.image_id), []).append(s)
    series = {name: _aggregate_rows(rows)
              for name, rows in sorted(by_series.items())}
    return EvalReport(images=list(per_image), series=series,
                      overall=_aggregate_rows(per_image), config=cfg)


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


def write_report_csv(report: EvalReport, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "id", "n_images", "n_gt", "n_det",
                    "precision", "recall", "f1",
                    "one_to_one", "splits", "merges"])
        for s in report.images:
            w.writerow(["image", s.image_id, 1, s.n_gt, s.n_det,
                        _fmt(s.precision), _fmt(s.recall), _fmt(s.f1),
                        s.one_to_one, s.splits, s.merges])
        for name, row in report.series.items():
            w.writerow(["series", name, row.n_images, "", "",
                        _fmt(row.precision), _fmt(row.recall), _fmt(row.f1),
                        row.one_to_one, row.splits, row.merges])
        o = report.overall
        w.writerow(["all", "All", o.n_images, "", "",
                    _fmt(o.precision), _fmt(o.recall), _fmt(o.f1),
                    o.one_to_one, o.splits, o.merges])


def write_sweep_csv(t_r_grid: Sequence[float], t_p_grid: Sequence[float],
                    f1: np.ndarray, path: Path | str) -> None:
    """Sweep table: t_r down the rows, t_p across the columns, F1 in %."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_r\\t_p"] + [f"{t:.2f}" for t in sorted(t_p_grid)])
        for a, t_r in enumerate(sorted(t_r_grid)):
            row = [f"{t_r:.2f}"]
            for b in range(len(t_p_grid)):
                v = f1[a, b]
                row.append("" if np.isnan(v) else f"{100.0 * v:.2f}")
            w.writerow(row)
