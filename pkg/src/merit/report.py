"""Table and figure emitters over study results.

Tables render both as full-precision CSV and as aligned text rounded to
two decimals, matching how the result grids are read. Figures are
written as deterministic SVG: identical inputs produce byte-identical
files (fixed-precision coordinates, no timestamps or generated ids), so
they are golden-file testable.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .detrend import SEASONS, season_of
from .exceptions import DataError, ParameterError
from .linreg import RegressionResult
from .metrics import StudyFrame

CI_MULTIPLIER = 1.96  # 95% normal band

#: default inner-fraction trims per exported violin column
VIOLIN_TRIMS = {
    "detrended_price": 0.9999,
    "hydro_pct": 0.9999,
    "solar_pct": 0.99,
    "wind_pct": 0.99,
}


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


def results_csv(results: list[RegressionResult]) -> str:
    """Full-precision CSV in the model/coefficient/estimate/se/p layout."""
    lines = ["model,coefficient,estimate,std_error,p_value"]
    for result in results:
        for row in result.rows():
            lines.append(
                ",".join(
                    [
                        row["model"],
                        row["coefficient"],
                        repr(row["estimate"]),
                        repr(row["std_error"]),
                        repr(row["p_value"]),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def render_table(results: list[RegressionResult], title: str = "") -> tuple[str, str]:
    """(csv_text, aligned_text) for one result set.

    The text table rounds to two decimals, as the printed tables do;
    the CSV keeps full precision.
    """
    csv_text = results_csv(results)
    header = ("Model", "Coefficient", "Estimate", "Std. Error", "P-value")
    body: list[tuple[str, ...]] = []
    for result in results:
        rows = result.rows()
        for i, row in enumerate(rows):
            body.append(
                (
                    row["model"] if i == 0 else "",
                    row["coefficient"],
                    f"{row['estimate']:.2f}",
                    f"{row['std_error']:.2f}",
                    f"{row['p_value']:.2f}",
                )
            )
    widths = [
        max(len(header[j]), *(len(r[j]) for r in body)) if body else len(header[j])
        for j in range(5)
    ]
    lines = []
    if title:
        lines.append(title)
    rule = "-+-".join("-" * w for w in widths)
    lines.append(" | ".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append(rule)
    for row in body:
        lines.append(" | ".join(v.ljust(w) for v, w in zip(row, widths)))
    return csv_text, "\n".join(lines) + "\n"


def load_results_csv(path: str) -> list[dict]:
    """Read one bundle results CSV back into row dicts."""
    if not os.path.exists(path):
        raise DataError(f"results file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "model": row["model"],
                    "coefficient": row["coefficient"],
                    "estimate": float(row["estimate"]),
                    "std_error": float(row["std_error"]),
                    "p_value": float(row["p_value"]),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# quantile coefficient plot
# ---------------------------------------------------------------------------


@dataclass
class QuantilePlotSeries:
    """Per-regressor coefficient path across quantiles, with OLS band."""

    name: str
    taus: tuple[float, ...]
    estimates: tuple[float, ...]
    lowers: tuple[float, ...]
    uppers: tuple[float, ...]
    ols_estimate: float
    ols_lower: float
    ols_upper: float

    def __post_init__(self):
        k = len(self.taus)
        if k < 2:
            raise ParameterError("quantile plot needs at least 2 quantile points")
        if not (len(self.estimates) == len(self.lowers) == len(self.uppers) == k):
            raise ParameterError("quantile plot series lengths differ")
        if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
            raise ParameterError(f"tau values must be strictly increasing: {self.taus}")
        for lo, est, hi in zip(self.lowers, self.estimates, self.uppers):
            if not lo <= est <= hi:
                raise ParameterError("requires lower <= estimate <= upper")
        if not self.ols_lower <= self.ols_estimate <= self.ols_upper:
            raise ParameterError("requires ols_lower <= ols_estimate <= ols_upper")


def plot_series_from_results(
    mean_rows: list[dict], quantile_rows_by_tau: dict[float, list[dict]], model: str
) -> list[QuantilePlotSeries]:
    """Assemble plot series for one model label from loaded result rows."""
    taus = tuple(sorted(quantile_rows_by_tau))
    if len(taus) < 2:
        raise ParameterError("need at least 2 quantile result sets to plot")
    mean_by_coef = {
        r["coefficient"]: r for r in mean_rows if r["model"] == model
    }
    if not mean_by_coef:
        raise DataError(f"no mean-effect rows found for model {model!r}")
    names = [c for c in mean_by_coef if c != "intercept"]
    series = []
    for name in names:
        estimates, lowers, uppers = [], [], []
        for tau in taus:
            match = [
                r
                for r in quantile_rows_by_tau[tau]
                if r["model"] == model and r["coefficient"] == name
            ]
            if not match:
                raise DataError(f"missing quantile row for {model}/{name} at tau={tau}")
            est, se = match[0]["estimate"], match[0]["std_error"]
            estimates.append(est)
            lowers.append(est - CI_MULTIPLIER * se)
            uppers.append(est + CI_MULTIPLIER * se)
        mean_row = mean_by_coef[name]
        series.append(
            QuantilePlotSeries(
                name=name,
                taus=taus,
                estimates=tuple(estimates),
                lowers=tuple(lowers),
                uppers=tuple(uppers),
                ols_estimate=mean_row["estimate"],
                ols_lower=mean_row["estimate"] - CI_MULTIPLIER * mean_row["std_error"],
                ols_upper=mean_row["estimate"] + CI_MULTIPLIER * mean_row["std_error"],
            )
        )
    return series


class _Svg:
    """Minimal deterministic SVG writer (fixed-precision coordinates)."""

    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
            f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">\n'
        ]

    @staticmethod
    def _c(v: float) -> str:
        return f"{v:.2f}"

    def line(self, x1, y1, x2, y2, stroke, width=1.0, dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{self._c(x1)}" y1="{self._c(y1)}" x2="{self._c(x2)}" '
            f'y2="{self._c(y2)}" stroke="{stroke}" stroke-width="{width:g}"{dash_attr}/>\n'
        )

    def polyline(self, points, stroke, width=1.5):
        pts = " ".join(f"{self._c(x)},{self._c(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width:g}"/>\n'
        )

    def polygon(self, points, fill, opacity=1.0):
        pts = " ".join(f"{self._c(x)},{self._c(y)}" for x, y in points)
        self.parts.append(
            f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity:g}" '
            'stroke="none"/>\n'
        )

    def circle(self, x, y, r, fill):
        self.parts.append(
            f'<circle cx="{self._c(x)}" cy="{self._c(y)}" r="{r:g}" fill="{fill}"/>\n'
        )

    def rect(self, x, y, w, h, fill, opacity=1.0):
        self.parts.append(
            f'<rect x="{self._c(x)}" y="{self._c(y)}" width="{self._c(w)}" '
            f'height="{self._c(h)}" fill="{fill}" fill-opacity="{opacity:g}"/>\n'
        )

    def text(self, x, y, content, size=11, anchor="start", fill="#000000"):
        self.parts.append(
            f'<text x="{self._c(x)}" y="{self._c(y)}" font-family="sans-serif" '
            f'font-size="{size:g}" text-anchor="{anchor}" fill="{fill}">{content}</text>\n'
        )

    def render(self) -> str:
        return "".join(self.parts) + "</svg>\n"


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return ticks


def render_quantile_plot(series_list: list[QuantilePlotSeries], title: str = "") -> str:
    """One panel per regressor: quantile path with error band over the OLS line."""
    if not series_list:
        raise ParameterError("nothing to plot")
    panel_w, panel_h = 300.0, 260.0
    margin_l, margin_r, margin_t, margin_b = 58.0, 16.0, 34.0, 40.0
    width = len(series_list) * (panel_w + margin_l + margin_r)
    height = panel_h + margin_t + margin_b
    svg = _Svg(width, height)
    if title:
        svg.text(width / 2.0, 16.0, title, size=13, anchor="middle")

    for i, series in enumerate(series_list):
        ox = i * (panel_w + margin_l + margin_r) + margin_l
        oy = margin_t
        ys = (
            list(series.lowers)
            + list(series.uppers)
            + [series.ols_lower, series.ols_upper]
        )
        y_lo, y_hi = min(ys), max(ys)
        padding = 0.08 * (y_hi - y_lo) if y_hi > y_lo else 1.0
        y_lo -= padding
        y_hi += padding

        def sx(tau):
            return ox + tau * panel_w

        def sy(v):
            return oy + (y_hi - v) / (y_hi - y_lo) * panel_h

        # frame and ticks
        svg.line(ox, oy, ox, oy + panel_h, "#000000")
        svg.line(ox, oy + panel_h, ox + panel_w, oy + panel_h, "#000000")
        for tick in _nice_ticks(y_lo, y_hi):
            svg.line(ox - 4, sy(tick), ox, sy(tick), "#000000")
            svg.text(ox - 7, sy(tick) + 3.5, f"{tick:g}", size=10, anchor="end")
        for tau in series.taus:
            svg.line(sx(tau), oy + panel_h, sx(tau), oy + panel_h + 4, "#000000")
            svg.text(sx(tau), oy + panel_h + 16, f"{tau:g}", size=10, anchor="middle")
        svg.text(ox + panel_w / 2.0, oy + panel_h + 32, "quantile", size=10, anchor="middle")
        svg.text(ox + panel_w / 2.0, oy - 10, series.name, size=12, anchor="middle")

        # shaded bootstrap band around the quantile path
        band = [(sx(t), sy(u)) for t, u in zip(series.taus, series.uppers)]
        band += [(sx(t), sy(lo)) for t, lo in zip(reversed(series.taus), reversed(series.lowers))]
        svg.polygon(band, fill="#bbbbbb", opacity=0.5)

        # OLS estimate with dashed confidence band
        svg.line(ox, sy(series.ols_estimate), ox + panel_w, sy(series.ols_estimate), "#cc0000", width=1.5)
        svg.line(ox, sy(series.ols_lower), ox + panel_w, sy(series.ols_lower), "#cc0000", width=1.0, dash="5,4")
        svg.line(ox, sy(series.ols_upper), ox + panel_w, sy(series.ols_upper), "#cc0000", width=1.0, dash="5,4")

        # quantile path and points
        svg.polyline(
            [(sx(t), sy(e)) for t, e in zip(series.taus, series.estimates)],
            stroke="#000000",
        )
        for t, e in zip(series.taus, series.estimates):
            svg.circle(sx(t), sy(e), 3.0, "#000000")
    return svg.render()


def render_correlation_plot(names, matrix) -> str:
    """Simple deterministic heatmap of a correlation matrix."""
    names = tuple(names)
    matrix = np.asarray(matrix, dtype=float)
    k = len(names)
    cell = 64.0
    margin_l, margin_t = 120.0, 110.0
    width = margin_l + k * cell + 20.0
    height = margin_t + k * cell + 20.0
    svg = _Svg(width, height)
    svg.text(margin_l + k * cell / 2.0, 24.0, "correlation", size=13, anchor="middle")
    for j, name in enumerate(names):
        svg.text(margin_l + (j + 0.5) * cell, margin_t - 8.0, name, size=9, anchor="middle")
        svg.text(margin_l - 6.0, margin_t + (j + 0.6) * cell, name, size=9, anchor="end")
    for i in range(k):
        for j in range(k):
            r = float(matrix[i, j])
            # blue for negative, red for positive, white at zero
            intensity = int(round(255 * (1.0 - abs(r))))
            channel = f"{intensity:02x}"
            color = f"#ff{channel}{channel}" if r >= 0 else f"#{channel}{channel}ff"
            svg.rect(margin_l + j * cell, margin_t + i * cell, cell, cell, color)
            svg.text(
                margin_l + (j + 0.5) * cell,
                margin_t + (i + 0.62) * cell,
                f"{r:.2f}",
                size=10,
                anchor="middle",
            )
    return svg.render()


# ---------------------------------------------------------------------------
# violin and seasonal exports
# ---------------------------------------------------------------------------


def export_violin_data(
    frame: StudyFrame, value_column: str, trim: float
) -> dict[str, np.ndarray]:
    """Per-season values with the outer (1 - trim)/2 tails removed.

    Groups with no rows are skipped. The consumer renders the violin;
    alongside the raw values, summary quantiles are exported by
    :func:`violin_summary_rows`.
    """
    if not 0.9 < trim <= 1.0:
        raise ParameterError(f"trim must lie in (0.9, 1.0], got {trim}")
    values = frame.column(value_column)
    seasons = np.array([season_of(ts) for ts in frame.timestamps])
    out: dict[str, np.ndarray] = {}
    for season in SEASONS:
        group = values[seasons == season]
        if group.size == 0:
            continue
        if trim >= 1.0:
            out[season] = group
            continue
        tail = (1.0 - trim) / 2.0
        lo, hi = np.quantile(group, [tail, 1.0 - tail])
        out[season] = group[(group >= lo) & (group <= hi)]
    return out


def violin_csv(groups: dict[str, np.ndarray]) -> str:
    lines = ["season,value"]
    for season in SEASONS:
        if season not in groups:
            continue
        for v in groups[season]:
            lines.append(f"{season},{repr(float(v))}")
    return "\n".join(lines) + "\n"


def violin_summary_rows(groups: dict[str, np.ndarray]) -> str:
    lines = ["season,count,min,q25,median,q75,max"]
    for season in SEASONS:
        if season not in groups:
            continue
        g = groups[season]
        qs = np.quantile(g, [0.25, 0.5, 0.75])
        lines.append(
            ",".join(
                [season, str(g.size)]
                + [repr(float(v)) for v in (g.min(), qs[0], qs[1], qs[2], g.max())]
            )
        )
    return "\n".join(lines) + "\n"


def seasonal_penetration_csv(frame: StudyFrame) -> str:
    """Mean per-season penetration of each tracked source."""
    seasons = np.array([season_of(ts) for ts in frame.timestamps])
    lines = ["season,hydro_pct,solar_pct,wind_pct"]
    for season in SEASONS:
        mask = seasons == season
        if not mask.any():
            continue
        means = [float(frame.column(c)[mask].mean()) for c in ("hydro_pct", "solar_pct", "wind_pct")]
        lines.append(",".join([season] + [repr(m) for m in means]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# bundle-directory report
# ---------------------------------------------------------------------------

JOINT_MODEL = "hydro+wind+solar"


def _load_quantile_rows(bundle_dir: str, tag: str) -> dict[float, list[dict]]:
    rows_by_tau: dict[float, list[dict]] = {}
    for name in sorted(os.listdir(bundle_dir)):
        if name.startswith(f"qr_{tag}_tau") and name.endswith(".csv"):
            tau = float(name[len(f"qr_{tag}_tau"):-len(".csv")])
            rows_by_tau[tau] = load_results_csv(os.path.join(bundle_dir, name))
    return rows_by_tau


def write_report(bundle_dir: str, out_dir: str | None = None,
                 trim: float | None = None) -> list[str]:
    """Emit figures, violin data, seasonal bars, and text tables from a bundle."""
    if not os.path.isdir(bundle_dir):
        raise DataError(f"bundle directory not found: {bundle_dir}")
    out_dir = out_dir or bundle_dir
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def emit(name: str, text: str):
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(text)
        written.append(name)

    frame = StudyFrame.from_csv(os.path.join(bundle_dir, "study_frame.csv"))

    for tag, pretty in (("price", "detrended price"), ("volatility", "detrended volatility")):
        mean_rows = load_results_csv(os.path.join(bundle_dir, f"mean_{tag}.csv"))
        rows_by_tau = _load_quantile_rows(bundle_dir, tag)
        if len(rows_by_tau) >= 2:
            series = plot_series_from_results(mean_rows, rows_by_tau, JOINT_MODEL)
            emit(
                f"fig_qr_{tag}.svg",
                render_quantile_plot(series, title=f"quantile coefficients: {pretty}"),
            )

    for column, default_trim in VIOLIN_TRIMS.items():
        groups = export_violin_data(frame, column, trim if trim is not None else default_trim)
        emit(f"violin_{column}.csv", violin_csv(groups))
        emit(f"violin_{column}_summary.csv", violin_summary_rows(groups))

    emit("seasonal_penetration.csv", seasonal_penetration_csv(frame))

    corr_path = os.path.join(bundle_dir, "correlation.csv")
    if os.path.exists(corr_path):
        with open(corr_path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:]
        matrix = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
        emit("fig_correlation.svg", render_correlation_plot(names, matrix))

    emit("tables.txt", _render_all_tables(bundle_dir))
    return written


def _render_all_tables(bundle_dir: str) -> str:
    sections = []
    for tag, pretty in (("price", "detrended price"), ("volatility", "detrended volatility")):
        mean_path = os.path.join(bundle_dir, f"mean_{tag}.csv")
        if os.path.exists(mean_path):
            sections.append(
                _text_table_from_rows(load_results_csv(mean_path), f"Mean effects: {pretty}")
            )
        for tau, rows in sorted(_load_quantile_rows(bundle_dir, tag).items()):
            sections.append(
                _text_table_from_rows(rows, f"Quantile effects (tau={tau:g}): {pretty}")
            )
    return "\n".join(sections)


def _text_table_from_rows(rows: list[dict], title: str) -> str:
    header = ("Model", "Coefficient", "Estimate", "Std. Error", "P-value")
    body = []
    previous_model = None
    for row in rows:
        body.append(
            (
                row["model"] if row["model"] != previous_model else "",
                row["coefficient"],
                f"{row['estimate']:.2f}",
                f"{row['std_error']:.2f}",
                f"{row['p_value']:.2f}",
            )
        )
        previous_model = row["model"]
    widths = [
        max(len(header[j]), *(len(r[j]) for r in body)) if body else len(header[j])
        for j in range(5)
    ]
    lines = [title]
    lines.append(" | ".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append("-+-".join("-" * w for w in widths))
    for row in body:
        lines.append(" | ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
