from typing import List, Optional, TypedDict


class CsvRow(TypedDict):
    scheme: str
    b1: str
    b2: str
    snr_db: str
    user: str
    rate_bps_hz: str
    ci_halfwidth: str
    source: str


class MomentRow(TypedDict):
    name: str
    kind: str
    empirical: float
    closed_form: float
    std_error: float
    passed: bool
    note: str


class ComparisonReport(TypedDict, total=False):
    comparison: str
    regime: str
    winner: str
    threshold: Optional[float]
    crossover_gamma: Optional[float]
    crossover_db: Optional[float]
    detail: str


class UserRegimeReport(TypedDict):
    user: int
    beta: float
    beta_bar: float
    mrt_vs_analog: ComparisonReport
    zf_vs_analog: ComparisonReport


class RegimeReport(TypedDict):
    m: int
    k: int
    n: int
    b1: str
    b2: str
    snr_db: float
    b1_threshold: Optional[float]
    k_threshold: float
    users: List[UserRegimeReport]
