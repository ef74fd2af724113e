import logging
from pathlib import Path
from typing import Dict, List, NoReturn, Optional

import typer
from rich.console import Console

from .config import (
    load_config,
    load_experiment_file,
    parse_beta,
    parse_bits,
    parse_bool,
    parse_int,
    parse_schemes,
    parse_snr_grid,
    reset_config,
    set_config,
)
from .constants import (
    BETA_HELP,
    BITS_HELP,
    DEFAULT_APPROX_TOL,
    DEFAULT_B1,
    DEFAULT_B2,
    DEFAULT_BETA,
    DEFAULT_CACHE_SIZE,
    DEFAULT_CHANNEL,
    DEFAULT_K,
    DEFAULT_LOSS_SNR_DB,
    DEFAULT_M,
    DEFAULT_PATHS,
    DEFAULT_SNR_DB,
    DEFAULT_VALIDATE_TRIALS,
    FORMULA_HELP,
    SCHEME_HELP,
    SNR_HELP,
    VALID_CHANNELS,
    VALID_FORMULAS,
    VALID_PRESETS,
    VALID_SCHEMES,
)
from .errors import ConfigurationError, HybridRateError, ResourceLimitError
from .simulator import ScenarioConfig
from .types import CsvRow

app = typer.Typer(rich_markup_mode="rich", help="Rate analysis of sub-connected hybrid precoding.")
console = Console()
logger = logging.getLogger(__name__)

cache_app = typer.Typer(rich_markup_mode="rich")
app.add_typer(cache_app, name="cache", help="Manage the result cache.")

config_app = typer.Typer(rich_markup_mode="rich")
app.add_typer(config_app, name="config", help="Set user defaults.")


def _verbose(verbose: bool) -> None:
    if verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s: %(message)s")


def _fail(e: HybridRateError) -> NoReturn:
    console.print(f"[red]{e}[/red]", highlight=False)
    raise typer.Exit(3 if isinstance(e, ResourceLimitError) else 2) from e


def _merge(config_path: Optional[Path], flags: Dict[str, Optional[object]]) -> Dict[str, str]:
    """Flag values override the experiment file; both end up as strings for the shared parsers."""
    values = load_experiment_file(config_path) if config_path is not None else {}
    for key, value in flags.items():
        if value is not None:
            values[key] = str(value)
    return values


def _scenario(values: Dict[str, str], default_trials: int, default_beta: str) -> ScenarioConfig:
    beta, beta_range = parse_beta(values.get("beta", default_beta))
    channel = values.get("channel", DEFAULT_CHANNEL)
    if channel not in VALID_CHANNELS:
        raise ConfigurationError(f"Invalid channel '{channel}'. Must be one of: {', '.join(VALID_CHANNELS)}")
    return ScenarioConfig(
        m=parse_int(values.get("m", str(DEFAULT_M)), "M"),
        k=parse_int(values.get("k", str(DEFAULT_K)), "K"),
        b1=parse_bits(values.get("b1", str(DEFAULT_B1)), "B1"),
        b2=parse_bits(values.get("b2", str(DEFAULT_B2)), "B2"),
        channel=channel,  # type: ignore[arg-type]
        num_paths=parse_int(values.get("paths", str(DEFAULT_PATHS)), "paths"),
        schemes=parse_schemes(values.get("scheme", ",".join(VALID_SCHEMES))),
        snr_db=parse_snr_grid(values.get("snr-db", DEFAULT_SNR_DB)),
        beta=beta,
        beta_range=beta_range,
        per_trial_beta=parse_bool(values.get("per-trial-beta", "false"), "per-trial-beta"),
        freeze_codebook=parse_bool(values.get("freeze-codebook", "false"), "freeze-codebook"),
        trials=parse_int(values.get("trials", str(default_trials)), "trials"),
        seed=parse_int(values.get("seed", "0"), "seed"),
    )


@app.command()
def simulate(
    preset: Optional[str] = typer.Option(
        None, "--preset", "-p", help=f"Built-in sweep[dim] (options: {', '.join(VALID_PRESETS)})[/dim]"
    ),
    m: Optional[int] = typer.Option(None, "--m", help="Number of base station antennas M"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of users K (M must be divisible by K)"),
    b1: Optional[str] = typer.Option(None, "--b1", help=f"Phase shifter bits B1. {BITS_HELP}"),
    b2: Optional[str] = typer.Option(None, "--b2", help=f"Feedback bits B2. {BITS_HELP}"),
    snr_db: Optional[str] = typer.Option(None, "--snr-db", help=SNR_HELP),
    beta: Optional[str] = typer.Option(None, "--beta", help=BETA_HELP),
    channel: Optional[str] = typer.Option(None, "--channel", help="Channel model: rayleigh or mmwave"),
    paths: Optional[int] = typer.Option(None, "--paths", help="Propagation paths of the mmWave channel"),
    scheme: Optional[str] = typer.Option(None, "--scheme", "-s", help=SCHEME_HELP),
    trials: Optional[int] = typer.Option(None, "--trials", "-t", help="Monte Carlo trials"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed (required)"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="CSV output path, '-' for standard output"),
    with_analytic: bool = typer.Option(False, "--with-analytic", help="Add closed-form rows next to each scheme"),
    per_trial_beta: bool = typer.Option(False, "--per-trial-beta", help="Redraw uniform path losses every trial"),
    freeze_codebook: bool = typer.Option(False, "--freeze-codebook", help="Draw one codebook per user for all trials"),
    no_cache: bool = typer.Option(False, "--no-cache", help="Bypass the result cache"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment file of key=value lines"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """
    Run the Monte Carlo rate simulation and write per-user rates as CSV.
    """
    _verbose(verbose)
    default_workers, default_trials, _ = load_config()

    from .presets import FIXED_KEYS, build_preset
    from .report import (
        analytic_rows,
        emit_csv,
        predicted_crossover_db,
        print_rate_summary,
        simulation_rows,
    )
    from .simulator import cached_experiment, crossover_db

    try:
        values = _merge(
            config,
            {
                "preset": preset,
                "m": m,
                "k": k,
                "b1": b1,
                "b2": b2,
                "snr-db": snr_db,
                "beta": beta,
                "channel": channel,
                "paths": paths,
                "scheme": scheme,
                "trials": trials,
                "seed": seed,
                "workers": workers,
                "per-trial-beta": True if per_trial_beta else None,
                "freeze-codebook": True if freeze_codebook else None,
            },
        )
        if "seed" not in values:
            console.print("[red]--seed is required for simulate[/red]")
            raise typer.Exit(2)
        worker_count = parse_int(values.get("workers", str(default_workers)), "workers")
        base = _scenario(values, default_trials, DEFAULT_BETA)
        if "preset" in values:
            fixed = [f"--{key}" for key in FIXED_KEYS if key in values]
            if fixed:
                raise ConfigurationError(f"--preset sets {', '.join(fixed)} itself; drop them or run without a preset")
            arms = build_preset(values["preset"], base).arms
        else:
            arms = [base]
        for arm in arms:
            arm.validate()
    except HybridRateError as e:
        _fail(e)

    to_file = out is not None and out != "-"
    rows: List[CsvRow] = []
    for arm in arms:
        if to_file:
            console.print(f"[dim]Simulating {arm.trials} trials, B1={arm.b1}, B2={arm.b2}...[/dim]")
        try:
            result = cached_experiment(arm, worker_count, use_cache=not no_cache)
        except HybridRateError as e:
            _fail(e)
        rows.extend(simulation_rows(result))
        if with_analytic:
            rows.extend(analytic_rows(arm, result.beta))
        if to_file:
            hybrids = [s for s in arm.schemes if s != "analog"] if "analog" in arm.schemes else []
            crossovers = {s: crossover_db(result, s, "analog") for s in hybrids}
            predicted = {s: predicted_crossover_db(arm, result.beta, s) for s in hybrids}
            print_rate_summary(result, crossovers, predicted)
    emit_csv(rows, out)


@app.command()
def analyze(
    formula: List[str] = typer.Option(  # noqa: B008
        ["analog", "mrt-approx", "zf-lb"], "--formula", "-f", help=FORMULA_HELP
    ),
    m: Optional[int] = typer.Option(None, "--m", help="Number of base station antennas M"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of users K"),
    b1: Optional[str] = typer.Option(None, "--b1", help=f"Phase shifter bits B1. {BITS_HELP}"),
    b2: Optional[str] = typer.Option(None, "--b2", help=f"Feedback bits B2. {BITS_HELP}"),
    snr_db: Optional[str] = typer.Option(None, "--snr-db", help=SNR_HELP),
    beta: Optional[str] = typer.Option(None, "--beta", help=f"{BETA_HELP} (default 1 for every user)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed of a uniform path loss draw"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="CSV output path, '-' for standard output"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment file of key=value lines"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """
    Evaluate closed-form rate curves on an SNR grid and write them as CSV.
    """
    _verbose(verbose)

    from .report import emit_csv, formula_rows

    unknown = [f for f in formula if f not in VALID_FORMULAS]
    if unknown:
        console.print(
            f"[red]Invalid --formula value(s): {', '.join(unknown)}. Must be one of: {', '.join(VALID_FORMULAS)}[/red]"
        )
        raise typer.Exit(2)
    try:
        values = _merge(config, {"m": m, "k": k, "b1": b1, "b2": b2, "snr-db": snr_db, "beta": beta, "seed": seed})
        cfg = _scenario(values, 0, "1")
        cfg.validate(min_trials=0)
        rows = formula_rows(cfg, cfg.experiment_beta(), formula)
    except HybridRateError as e:
        _fail(e)
    emit_csv(rows, out)


@app.command()
def regime(
    m: Optional[int] = typer.Option(None, "--m", help="Number of base station antennas M"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of users K (at least 2)"),
    b1: Optional[str] = typer.Option(None, "--b1", help=f"Phase shifter bits B1. {BITS_HELP}"),
    b2: Optional[str] = typer.Option(None, "--b2", help=f"Feedback bits B2. {BITS_HELP}"),
    snr_db: float = typer.Option(10.0, "--snr-db", help="SNR in dB at which the winner is reported"),
    beta: Optional[str] = typer.Option(None, "--beta", help=f"{BETA_HELP} (default 1 for every user)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed of a uniform path loss draw"),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment file of key=value lines"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """
    Report the B1, K and B2 thresholds and the crossover SNRs of both hybrid schemes against analog.
    """
    _verbose(verbose)

    from .report import build_regime_report, print_regime_report, regime_json

    try:
        values = _merge(config, {"m": m, "k": k, "b1": b1, "b2": b2, "beta": beta, "seed": seed})
        cfg = _scenario(values, 0, "1")
        cfg.validate(min_trials=0)
        if cfg.k < 2:
            raise ConfigurationError("Regime thresholds need at least two users")
        report = build_regime_report(cfg, cfg.experiment_beta(), snr_db)
    except HybridRateError as e:
        _fail(e)
    if json_output:
        typer.echo(regime_json(report))
    else:
        print_regime_report(report)


@app.command()
def validate(
    m: Optional[int] = typer.Option(None, "--m", help="Number of base station antennas M"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of users K (at least 2)"),
    b1: Optional[str] = typer.Option(None, "--b1", help=f"Phase shifter bits B1. {BITS_HELP}"),
    b2: Optional[str] = typer.Option(None, "--b2", help=f"Feedback bits B2. {BITS_HELP}"),
    beta: Optional[str] = typer.Option(None, "--beta", help=f"{BETA_HELP} (default 1 for every user)"),
    trials: Optional[int] = typer.Option(None, "--trials", "-t", help="Channel draws, at least 10^4"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed (default 0)"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    approx_tol: float = typer.Option(
        DEFAULT_APPROX_TOL, "--approx-tol", help="Relative tolerance of large-N approximations and bounds"
    ),
    loss_snr_db: float = typer.Option(DEFAULT_LOSS_SNR_DB, "--loss-snr-db", help="SNR in dB of the ZF rate-loss row"),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment file of key=value lines"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """
    Check Monte Carlo moments of the effective channel against their closed forms.
    """
    _verbose(verbose)
    default_workers, _, _ = load_config()

    from .moments import validate_moments
    from .report import moment_json, print_moment_report

    try:
        values = _merge(
            config,
            {"m": m, "k": k, "b1": b1, "b2": b2, "beta": beta, "trials": trials, "seed": seed, "workers": workers},
        )
        worker_count = parse_int(values.get("workers", str(default_workers)), "workers")
        cfg = _scenario(values, DEFAULT_VALIDATE_TRIALS, "1")
        if not json_output:
            console.print(f"[dim]Validating moments over {cfg.trials} trials...[/dim]")
        report = validate_moments(cfg, worker_count, approx_tol, loss_snr_db)
    except HybridRateError as e:
        _fail(e)
    if json_output:
        typer.echo(moment_json(report))
    else:
        print_moment_report(report)
    if not report.passed:
        if not json_output:
            console.print("[red]Moment validation failed.[/red]")
        raise typer.Exit(1)


@config_app.command("workers")
def config_workers(value: str = typer.Argument(..., help="Default worker process count")):
    """
    Set the default number of worker processes.
    """
    set_config("workers", value)


@config_app.command("trials")
def config_trials(value: str = typer.Argument(..., help="Default Monte Carlo trial count for simulate")):
    """
    Set the default number of Monte Carlo trials.
    """
    set_config("trials", value)


@config_app.command("cache-size")
def config_cache_size(
    value: str = typer.Argument(..., help="Cache size in bytes (0 to disable caching, 'default' to reset)")
):
    """
    Set the result cache size. Set to 0 to disable caching entirely, or 'default' to reset to the default size.
    """
    if value.lower() == "default":
        reset_config("cache-size")
        console.print(f"[green]Reset cache-size to default: {DEFAULT_CACHE_SIZE}[/green]")
    else:
        set_config("cache-size", value)


@cache_app.command("purge")
def purge(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """
    Purge the result cache.
    """
    _verbose(verbose)

    from .config import get_cache

    cache = get_cache()
    if cache is None:
        console.print("[yellow]Caching is disabled.[/yellow]")
    else:
        cache.clear()
        cache.close()
        console.print("[green]Cache purged.[/green]")
