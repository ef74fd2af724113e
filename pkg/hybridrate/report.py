import csv
import io
import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from .analysis import (
    FORMULAS,
    SystemParams,
    b1_threshold,
    gamma0,
    gamma1,
    k_threshold,
    predict_winner,
)
from .constants import CSV_COLUMNS
from .errors import BoundaryCaseError, UndefinedThresholdError
from .moments import MomentReport
from .numerics import Bits, db_to_linear
from .simulator import RateResult, ScenarioConfig, closed_form_rates
from .types import ComparisonReport, CsvRow, RegimeReport, UserRegimeReport

console = Console()
logger = logging.getLogger(__name__)


def bits_label(bits: Bits) -> str:
    return "inf" if math.isinf(bits) else str(int(bits))


def number(value: float) -> str:
    """Shortest round-trip decimal."""
    return repr(float(value))


def _finite_or_none(value: float) -> Optional[float]:
    return None if math.isinf(value) or math.isnan(value) else value


# CSV


def _row(scheme: str, b1: Bits, b2: Bits, snr_db: float, user: str, rate: float, ci: str, source: str) -> CsvRow:
    return {
        "scheme": scheme,
        "b1": bits_label(b1),
        "b2": bits_label(b2),
        "snr_db": number(snr_db),
        "user": user,
        "rate_bps_hz": number(rate),
        "ci_halfwidth": ci,
        "source": source,
    }


def simulation_rows(result: RateResult) -> List[CsvRow]:
    """Monte Carlo rows per scheme, SNR and user, each SNR closed by a user=sum row."""
    cfg = result.config
    rows: List[CsvRow] = []
    for scheme in cfg.schemes:
        for s, snr in enumerate(cfg.snr_db):
            for user, cell in enumerate(result.users[scheme][s]):
                rows.append(_row(scheme, cfg.b1, cfg.b2, snr, str(user), cell.mean, number(cell.half_width), "mc"))
            total = result.sums[scheme][s]
            rows.append(_row(scheme, cfg.b1, cfg.b2, snr, "sum", total.mean, number(total.half_width), "mc"))
    return rows


def _closed_form_block(name: str, cfg: ScenarioConfig, curves: np.ndarray) -> List[CsvRow]:
    rows: List[CsvRow] = []
    for s, snr in enumerate(cfg.snr_db):
        for user in range(cfg.k):
            rows.append(_row(name, cfg.b1, cfg.b2, snr, str(user), float(curves[s, user]), "", "closed_form"))
        rows.append(_row(name, cfg.b1, cfg.b2, snr, "sum", math.fsum(curves[s].tolist()), "", "closed_form"))
    return rows


def analytic_rows(cfg: ScenarioConfig, beta: np.ndarray) -> List[CsvRow]:
    """Closed-form rows matching each simulated scheme."""
    curves = closed_form_rates(cfg, beta)
    rows: List[CsvRow] = []
    for scheme in cfg.schemes:
        rows.extend(_closed_form_block(scheme, cfg, curves[scheme]))
    return rows


def formula_rows(cfg: ScenarioConfig, beta: np.ndarray, formulas: Sequence[str]) -> List[CsvRow]:
    """Closed-form rows for named formulas; the scheme column carries the formula name."""
    rows: List[CsvRow] = []
    for name in formulas:
        formula = FORMULAS[name]
        curves = np.array(
            [
                [
                    formula(SystemParams.for_user(cfg.m, cfg.k, cfg.b1, cfg.b2, gamma, beta.tolist(), u))
                    for u in range(cfg.k)
                ]
                for gamma in cfg.gammas
            ]
        )
        rows.extend(_closed_form_block(name, cfg, curves))
    return rows


def render_csv(rows: Sequence[CsvRow]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def emit_csv(rows: Sequence[CsvRow], out: Optional[str]) -> None:
    """Write CSV to `out`, or to standard output when `out` is None or '-'."""
    text = render_csv(rows)
    if out is None or out == "-":
        typer.echo(text, nl=False)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    console.print(f"[green]Wrote {len(rows)} rows to {path}[/green]", highlight=False)


# Simulation summary


def print_rate_summary(
    result: RateResult,
    crossovers: Dict[str, Optional[float]],
    predicted: Dict[str, Optional[float]],
) -> None:
    cfg = result.config
    table = Table(title=f"Sum rate (bps/Hz), M={cfg.m}, K={cfg.k}, B1={bits_label(cfg.b1)}, B2={bits_label(cfg.b2)}")
    table.add_column("SNR (dB)", justify="right")
    for scheme in cfg.schemes:
        table.add_column(scheme, justify="right")
    for s, snr in enumerate(cfg.snr_db):
        cells = [result.sums[scheme][s] for scheme in cfg.schemes]
        table.add_row(f"{snr:g}", *(f"{c.mean:.3f} ± {c.half_width:.3f}" for c in cells))
    console.print(table)
    console.print(f"Path losses: {', '.join(f'{b:.4g}' for b in result.beta.tolist())}", highlight=False)
    if result.degenerate:
        console.print(f"[yellow]ZF diagonal loading fired {result.degenerate} time(s).[/yellow]")
    for scheme, mc in crossovers.items():
        mc_text = "none on grid" if mc is None else f"{mc:.2f} dB"
        closed = predicted.get(scheme)
        closed_text = "none" if closed is None else f"{closed:.2f} dB"
        console.print(f"{scheme} vs analog crossover: Monte Carlo {mc_text}, closed form {closed_text}")
    for snr, gap in zf_shortfalls(result):
        console.print(
            f"[yellow]zf-hybrid Monte Carlo rate is {gap:.3f} bps/Hz below the zf-lb closed form at {snr:g} dB; "
            f"it is not a strict bound at N={cfg.n}.[/yellow]",
            highlight=False,
        )


def zf_shortfalls(result: RateResult) -> List[Tuple[float, float]]:
    """
    SNR points where some user's zf-hybrid Monte Carlo rate, CI included, lies below rate_zf_hybrid_lb.

    Each entry is (SNR in dB, largest per-user shortfall of the mean).
    """
    cfg = result.config
    if "zf-hybrid" not in cfg.schemes:
        return []
    closed = closed_form_rates(replace(cfg, schemes=("zf-hybrid",)), result.beta)["zf-hybrid"]
    out: List[Tuple[float, float]] = []
    for s, snr in enumerate(cfg.snr_db):
        below = [
            float(closed[s, user]) - cell.mean
            for user, cell in enumerate(result.users["zf-hybrid"][s])
            if cell.mean + cell.half_width < closed[s, user]
        ]
        if below:
            out.append((float(snr), max(below)))
    return out


def predicted_crossover_db(cfg: ScenarioConfig, beta: np.ndarray, scheme: str) -> Optional[float]:
    """Closed-form crossover of the sum-rate-weighted average user, or None when there is none."""
    if cfg.k < 2:
        return None
    p = SystemParams(
        m=cfg.m,
        k=cfg.k,
        b1=cfg.b1,
        b2=cfg.b2,
        gamma=1.0,
        beta_k=float(np.mean(beta)),
        beta_bar=float(np.mean(beta)) * (cfg.k - 1),
    )
    comparison = "mrt-vs-analog" if scheme == "mrt-hybrid" else "zf-vs-analog"
    return predict_winner(p, comparison).crossover_db


# Regime report


def _comparison_report(p: SystemParams, comparison: str) -> ComparisonReport:
    verdict = predict_winner(p, comparison)  # type: ignore[arg-type]
    report: ComparisonReport = {
        "comparison": verdict.comparison,
        "regime": verdict.regime,
        "winner": verdict.winner,
        "threshold": _finite_or_none(verdict.threshold),
        "crossover_gamma": verdict.crossover_gamma,
        "crossover_db": verdict.crossover_db,
        "detail": "",
    }
    if comparison == "mrt-vs-analog" and verdict.regime == "hybrid-always":
        if math.isinf(verdict.threshold):
            report["detail"] = "B1 threshold unbounded"
        elif p.b1 > verdict.threshold:
            try:
                value = gamma0(p)
                report["detail"] = f"gamma0 = {value:.4g} is not a positive finite SNR"
            except BoundaryCaseError as e:
                report["detail"] = f"boundary case: {e}"
        else:
            report["detail"] = "B1 at or below its threshold"
    elif comparison == "zf-vs-analog" and verdict.regime == "analog-always":
        if p.b2 <= verdict.threshold:
            report["detail"] = "B2 at or below its threshold"
        else:
            try:
                gamma1(p)
            except UndefinedThresholdError as e:
                report["detail"] = f"undefined: {e}"
    return report


def build_regime_report(cfg: ScenarioConfig, beta: np.ndarray, snr_db: float) -> RegimeReport:
    """Thresholds and per-user verdicts at one SNR."""
    gamma = db_to_linear(snr_db)
    users: List[UserRegimeReport] = []
    for u in range(cfg.k):
        p = SystemParams.for_user(cfg.m, cfg.k, cfg.b1, cfg.b2, gamma, beta.tolist(), u)
        users.append(
            {
                "user": u,
                "beta": p.beta_k,
                "beta_bar": p.beta_bar,
                "mrt_vs_analog": _comparison_report(p, "mrt-vs-analog"),
                "zf_vs_analog": _comparison_report(p, "zf-vs-analog"),
            }
        )
    return {
        "m": cfg.m,
        "k": cfg.k,
        "n": cfg.n,
        "b1": bits_label(cfg.b1),
        "b2": bits_label(cfg.b2),
        "snr_db": snr_db,
        "b1_threshold": _finite_or_none(b1_threshold(cfg.n, cfg.k, cfg.b2)),
        "k_threshold": k_threshold(cfg.n, cfg.b1, cfg.b2, cfg.k),
        "users": users,
    }


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def print_regime_report(report: RegimeReport) -> None:
    console.print(
        f"[bold]M={report['m']}, K={report['k']}, N={report['n']}, B1={report['b1']}, B2={report['b2']}, "
        f"SNR={report['snr_db']:g} dB[/bold]"
    )
    b1_text = "unbounded" if report["b1_threshold"] is None else f"{report['b1_threshold']:.4f}"
    console.print(f"B1 threshold: {b1_text}", highlight=False)
    console.print(f"K threshold: {report['k_threshold']:.4f}", highlight=False)

    table = Table(title="Per-user regimes")
    columns = ("user", "beta", "MRT regime", "gamma0 (dB)", "MRT winner")
    columns += ("B2 threshold", "ZF regime", "gamma1 (dB)", "ZF winner")
    for column in columns:
        table.add_column(column)
    for entry in report["users"]:
        mrt, zf = entry["mrt_vs_analog"], entry["zf_vs_analog"]
        table.add_row(
            str(entry["user"]),
            f"{entry['beta']:.4g}",
            mrt["regime"],
            _fmt(mrt.get("crossover_db"), 2),
            mrt["winner"],
            _fmt(zf.get("threshold"), 4),
            zf["regime"],
            _fmt(zf.get("crossover_db"), 2),
            zf["winner"],
        )
    console.print(table)
    for entry in report["users"]:
        for key in ("mrt_vs_analog", "zf_vs_analog"):
            detail = entry[key].get("detail")  # type: ignore[literal-required]
            if detail:
                console.print(f"[dim]user {entry['user']} {key}: {detail}[/dim]")


def regime_json(report: RegimeReport) -> str:
    return json.dumps(report, indent=2)


# Moment report


def print_moment_report(report: MomentReport) -> None:
    table = Table(title=f"Moment validation ({report.trials} trials)")
    for column in ("moment", "kind", "empirical", "closed form", "std error", "result", "note"):
        table.add_column(column)
    for row in report.rows:
        status = "[green]pass[/green]" if row["passed"] else "[red]FAIL[/red]"
        table.add_row(
            row["name"],
            row["kind"],
            f"{row['empirical']:.6g}",
            f"{row['closed_form']:.6g}",
            f"{row['std_error']:.2g}",
            status,
            row["note"],
        )
    console.print(table)


def moment_json(report: MomentReport) -> str:
    return json.dumps({"trials": report.trials, "passed": report.passed, "rows": report.rows}, indent=2)
