"""Closed-form radio energy model for co-stimulation versus watchdog monitoring.

Per-packet radio cost is linear in the packet size, ``a * size + b`` (µJ),
with separate constants for sending, receiving and overhearing. All internal
quantities are in µJ; report helpers convert to mJ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

SEND = (1.9, 454.0)
RECEIVE = (0.5, 356.0)
OVERHEAR = (0.39, 140.0)

REFERENCE_PERIOD = 500.0  # seconds; period the adjusted cost is normalised to
REFERENCE_PACKETS = 250  # watchdog packets overheard in the reference period

# First-stage any-misbehavior FP rates per window size used as reference inputs.
REFERENCE_FP_RATES = {50.0: 0.0355, 100.0: 0.0465, 250.0: 0.0928, 500.0: 0.1509}


@dataclass(frozen=True)
class EnergyParams:
    send: tuple[float, float] = SEND
    receive: tuple[float, float] = RECEIVE
    overhear: tuple[float, float] = OVERHEAR
    size_data: float = 1024.0
    size_f2: float = 48.0
    window_size: float = 50.0
    injection_rate: float = 0.5

    def __post_init__(self):
        for name in ("send", "receive", "overhear"):
            a, b = getattr(self, name)
            if a <= 0 or b <= 0:
                raise ValueError(f"{name} constants must be positive, got {(a, b)}")
        if self.size_data < 0 or self.size_f2 < 0:
            raise ValueError("packet sizes must be non-negative")
        if self.window_size <= 0 or self.injection_rate <= 0:
            raise ValueError("window_size and injection_rate must be positive")


def _cost(mode: tuple[float, float], size: float) -> float:
    a, b = mode
    return a * size + b


def xi_f0(n: float, params: EnergyParams = EnergyParams()) -> float:
    """Watchdog cost of overhearing ``n`` data packets (µJ)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return n * _cost(params.overhear, params.size_data)


def xi_F2(params: EnergyParams = EnergyParams()) -> float:
    """Cost of shipping one remote feature report upstream over two hops (µJ)."""
    per_hop = _cost(params.send, params.size_f2) + _cost(params.receive, params.size_f2)
    return 2.0 * per_hop


def xi_total(fp_rate: float, n: float, params: EnergyParams = EnergyParams()) -> float:
    """Expected per-window cost in a misbehavior-free network (µJ).

    Every window pays for the remote report; the watchdog stage is only paid
    for the fraction of windows the first stage raises an alarm on.
    """
    if not 0.0 <= fp_rate <= 1.0:
        raise ValueError(f"fp_rate must be a fraction in [0, 1], got {fp_rate}")
    return xi_F2(params) + fp_rate * xi_f0(n, params)


@dataclass(frozen=True)
class TradeOff:
    window_size: float
    fp_rate: float
    xi: float  # µJ per window
    xi_prime: float  # µJ per reference period
    gamma: float  # fraction saved relative to the watchdog

    @property
    def xi_mj(self) -> float:
        return self.xi / 1000.0

    @property
    def xi_prime_mj(self) -> float:
        return self.xi_prime / 1000.0

    @property
    def gamma_percent(self) -> float:
        return 100.0 * self.gamma


def trade_off(fp_rate: float, n: float, params: EnergyParams = EnergyParams()) -> TradeOff:
    xi = xi_total(fp_rate, n, params)
    xi_prime = (REFERENCE_PERIOD / params.window_size) * xi
    gamma = 1.0 - xi_prime / xi_f0(REFERENCE_PACKETS, params)
    return TradeOff(params.window_size, fp_rate, xi, xi_prime, gamma)


@dataclass(frozen=True)
class BreakEven:
    packets: float
    window_size: float


def breakeven_n(params: EnergyParams = EnergyParams()) -> BreakEven:
    """Packet count above which the remote report is cheaper than overhearing."""
    if params.size_data <= 0:
        raise ValueError("size_data must be positive")
    n = xi_F2(params) / _cost(params.overhear, params.size_data)
    return BreakEven(n, n / params.injection_rate)


def accumulate(duration: float, mode: str, fp_rate: float,
               params: EnergyParams = EnergyParams()) -> list[tuple[float, float]]:
    """Stepwise accumulated energy, one ``(time, µJ)`` point per elapsed window.

    Both modes overhear ``injection_rate * window_size`` packets per window
    when the watchdog is on; the co-stimulation mode only switches it on for
    the ``fp_rate`` fraction of windows.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n_window = params.injection_rate * params.window_size
    if mode == "watchdog":
        per_window = xi_f0(n_window, params)
    elif mode == "costim":
        per_window = xi_total(fp_rate, n_window, params)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    steps = math.ceil(duration / params.window_size - 1e-9)
    series = []
    for k in range(1, steps + 1):
        t = min(k * params.window_size, duration)
        series.append((t, k * per_window))
    return series


@dataclass
class EnergyReport:
    rows: list[TradeOff] = field(default_factory=list)
    breakeven: BreakEven | None = None

    def to_text(self, source: str = "reference") -> str:
        lines = [f"# energy report (fp source: {source})",
                 "window_size\tfp_rate_pct\txi_mJ\txi_prime_mJ\tgamma_pct"]
        for r in self.rows:
            lines.append(f"{r.window_size:g}\t{100 * r.fp_rate:.2f}\t{r.xi_mj:.2f}\t"
                         f"{r.xi_prime_mj:.2f}\t{r.gamma_percent:.2f}")
        if self.breakeven is not None:
            lines.append(f"# breakeven n={self.breakeven.packets:.3f}, "
                         f"window={self.breakeven.window_size:.2f} s")
        return "\n".join(lines) + "\n"


def energy_table(fp_rates: dict[float, float], n: float = 25,
                 params: EnergyParams = EnergyParams()) -> EnergyReport:
    """Trade-off rows for each ``{window_size: fp_rate}`` entry."""
    rows = []
    for win in sorted(fp_rates):
        p = EnergyParams(params.send, params.receive, params.overhear,
                         params.size_data, params.size_f2, win, params.injection_rate)
        rows.append(trade_off(fp_rates[win], n, p))
    return EnergyReport(rows, breakeven_n(params))


def fp_sweep(n: float = 25, params: EnergyParams = EnergyParams(),
             steps: int = 21) -> list[tuple[float, float]]:
    """Energy per window versus first-stage FP rate, ``(fp, µJ)`` pairs."""
    return [(k / (steps - 1), xi_total(k / (steps - 1), n, params)) for k in range(steps)]
