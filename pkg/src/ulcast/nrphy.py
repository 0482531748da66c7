"""3GPP NR numerology: frequency raster, band bins, TDD math, TS 38.306 rates.

Covers exactly what single-carrier FR1 uplink prediction needs: the global
ARFCN raster (TS 38.104 Table 5.4.2.1-1), coarse classification of carriers
into the four frequency layers seen in the telemetry plus ``OTHER``, UL symbol
accounting for TDD slot patterns, and the TS 38.306 maximum data-rate formula
for a UE without UL-2Tx. All intermediate arithmetic on code rate, overhead
and UL symbol fraction is exact (``fractions.Fraction``); conversion to float
happens once, at the end.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

__all__ = [
    "BandClass",
    "Duplex",
    "TddPattern",
    "UlLinkConfig",
    "RasterRangeError",
    "LinkConfigError",
    "TDD_DL7_UL2",
    "REFERENCE_CONFIGS",
    "arfcn_to_mhz",
    "classify_band",
    "tdd_ul_fraction",
    "max_ul_throughput",
    "prb_count",
    "register_prb",
]


class RasterRangeError(ValueError):
    """ARFCN outside the global frequency raster domain."""


class LinkConfigError(ValueError):
    """Inconsistent or unsupported uplink configuration."""


# Global frequency raster, TS 38.104 Table 5.4.2.1-1:
# (first N_REF, granularity MHz, base frequency MHz)
_RASTER_SEGMENTS = (
    (2_016_667, 0.06, 24250.08),
    (600_000, 0.015, 3000.0),
    (0, 0.005, 0.0),
)
MAX_NREF = 3_279_165


def arfcn_to_mhz(n_ref: int) -> float:
    """Map an NR-ARFCN to its carrier frequency in MHz."""
    n_ref = int(n_ref)
    if not 0 <= n_ref <= MAX_NREF:
        raise RasterRangeError(f"ARFCN {n_ref} outside raster domain [0, {MAX_NREF}]")
    for start, step, base in _RASTER_SEGMENTS:
        if n_ref >= start:
            return base + step * (n_ref - start)
    raise AssertionError("unreachable")


class BandClass(Enum):
    """Frequency layers distinguished by the predictor, plus a catch-all.

    The ranges are decision bins around each layer's carriers, wide enough
    that the nominal center frequency (700, 1800, 3400, 3900 MHz) lands in
    its own bin; they are not 3GPP band edges. n77 is split at 3.7 GHz into
    its low (40 MHz TDD) and high (100 MHz TDD) deployments.
    """

    N28_700 = "n28"
    N3_1800 = "n3"
    N77_3400 = "n77-3400"
    N77_3900 = "n77-3900"
    OTHER = "other"

    @property
    def freq_range_mhz(self) -> tuple[float, float] | None:
        return _BAND_BINS[self]


_BAND_BINS: dict[BandClass, tuple[float, float] | None] = {
    BandClass.N28_700: (600.0, 900.0),
    BandClass.N3_1800: (1700.0, 1920.0),
    BandClass.N77_3400: (3300.0, 3700.0),
    BandClass.N77_3900: (3700.0, 4200.0),
    BandClass.OTHER: None,
}


def classify_band(freq_mhz: float) -> BandClass:
    """Total classification of a carrier frequency; unmatched goes to OTHER."""
    if freq_mhz < 0:
        raise ValueError(f"frequency must be >= 0, got {freq_mhz}")
    for band, bounds in _BAND_BINS.items():
        if bounds is not None and bounds[0] <= freq_mhz < bounds[1]:
            return band
    return BandClass.OTHER


class Duplex(Enum):
    FDD = "fdd"
    TDD = "tdd"


@dataclass(frozen=True)
class TddPattern:
    """One TDD period as a D/S/U slot string plus the special-slot split.

    ``special_split`` is (downlink, gap, uplink) symbols and must sum to 14.
    A pattern must offer some uplink: at least one U slot, or an S slot with
    uplink symbols.
    """

    slots: str
    special_split: tuple[int, int, int] = (6, 4, 4)

    def __post_init__(self):
        if not self.slots or set(self.slots) - set("DSU"):
            raise LinkConfigError(f"slot string must be non-empty over D/S/U, got {self.slots!r}")
        dl, gap, ul = self.special_split
        if min(dl, gap, ul) < 0 or dl + gap + ul != 14:
            raise LinkConfigError(f"special split {self.special_split} must sum to 14 symbols")
        has_ul = "U" in self.slots or ("S" in self.slots and ul > 0)
        if not has_ul:
            raise LinkConfigError(f"pattern {self.slots!r} carries no uplink symbols")


# 7:2 DL:UL slot ratio with one special slot, the common FR1 TDD timing
TDD_DL7_UL2 = TddPattern("DDDDDDDSUU")


def tdd_ul_fraction(pattern: TddPattern) -> Fraction:
    """Fraction of symbols available to the uplink, exact."""
    n_u = pattern.slots.count("U")
    n_s = pattern.slots.count("S")
    ul_sym = pattern.special_split[2]
    return Fraction(14 * n_u + ul_sym * n_s, 14 * len(pattern.slots))


# Transmission bandwidth N_RB, TS 38.101-1 Table 5.3.2-1 subset (FR1).
# Keyed by (scs_khz, bandwidth_mhz); extensible via register_prb().
_PRB_TABLE: dict[tuple[int, float], int] = {
    (15, 5): 25, (15, 10): 52, (15, 15): 79, (15, 20): 106,
    (15, 25): 133, (15, 30): 160, (15, 40): 216, (15, 50): 270,
    (30, 10): 24, (30, 15): 38, (30, 20): 51, (30, 25): 65,
    (30, 30): 78, (30, 40): 106, (30, 50): 133, (30, 60): 162,
    (30, 70): 189, (30, 80): 217, (30, 90): 245, (30, 100): 273,
}


def prb_count(scs_khz: int, bandwidth_mhz: float) -> int:
    try:
        return _PRB_TABLE[(scs_khz, float(bandwidth_mhz))]
    except KeyError:
        raise LinkConfigError(
            f"no N_RB entry for {bandwidth_mhz} MHz at SCS {scs_khz} kHz; "
            f"use register_prb() to extend the table") from None


def register_prb(scs_khz: int, bandwidth_mhz: float, n_prb: int) -> None:
    """Extend the shipped N_RB subset with an extra (SCS, bandwidth) row."""
    if n_prb < 1:
        raise LinkConfigError(f"n_prb must be >= 1, got {n_prb}")
    _PRB_TABLE[(int(scs_khz), float(bandwidth_mhz))] = int(n_prb)


_MU_BY_SCS = {15: 0, 30: 1}


@dataclass(frozen=True)
class UlLinkConfig:
    """Single-carrier uplink configuration for the TS 38.306 rate formula.

    Defaults describe the UE class under study: one transmit antenna,
    256QAM (Qm=8), max code rate 948/1024, FR1 UL overhead 0.08, no scaling.
    ``n_prb`` defaults from the shipped bandwidth table; an explicit value
    must agree with that table. ``ul_symbol_fraction`` is 1 exactly for FDD
    and must be in (0, 1) for TDD.
    """

    duplex: Duplex
    bandwidth_mhz: float
    scs_khz: int
    n_prb: int | None = None
    layers: int = 1
    modulation_order: int = 8
    code_rate_max: Fraction = Fraction(948, 1024)
    overhead: Fraction = Fraction(8, 100)
    scaling: Fraction = Fraction(1)
    ul_symbol_fraction: Fraction = Fraction(1)

    def __post_init__(self):
        if self.scs_khz not in _MU_BY_SCS:
            raise LinkConfigError(f"SCS must be 15 or 30 kHz, got {self.scs_khz}")
        if self.bandwidth_mhz <= 0:
            raise LinkConfigError(f"bandwidth must be > 0, got {self.bandwidth_mhz}")
        table_prb = prb_count(self.scs_khz, self.bandwidth_mhz)
        if self.n_prb is None:
            object.__setattr__(self, "n_prb", table_prb)
        elif self.n_prb != table_prb:
            raise LinkConfigError(
                f"n_prb {self.n_prb} inconsistent with table value {table_prb} "
                f"for {self.bandwidth_mhz} MHz at SCS {self.scs_khz} kHz")
        if self.layers < 1:
            raise LinkConfigError(f"layers must be >= 1, got {self.layers}")
        if self.modulation_order < 1:
            raise LinkConfigError(f"modulation order must be >= 1, got {self.modulation_order}")
        if not 0 < self.code_rate_max <= 1:
            raise LinkConfigError(f"code rate must lie in (0, 1], got {self.code_rate_max}")
        if not 0 <= self.overhead < 1:
            raise LinkConfigError(f"overhead must lie in [0, 1), got {self.overhead}")
        if not 0 < self.scaling <= 1:
            raise LinkConfigError(f"scaling factor must lie in (0, 1], got {self.scaling}")
        frac = self.ul_symbol_fraction
        if self.duplex is Duplex.FDD:
            if frac != 1:
                raise LinkConfigError(f"FDD uses the whole carrier; got UL fraction {frac}")
        else:
            if not 0 < frac < 1:
                raise LinkConfigError(f"TDD UL fraction must lie in (0, 1), got {frac}")


def max_ul_throughput(cfg: UlLinkConfig) -> float:
    """Maximum uplink data rate in Mbps per TS 38.306 section 4.1.2.

    rate = 1e-6 * v * Qm * f * Rmax * (N_PRB * 12 / Ts) * (1 - OH) * ul_fraction
    with Ts = 1e-3 / (14 * 2^mu). Exact rational arithmetic until the final
    conversion. Round to two decimals for display only.
    """
    mu = _MU_BY_SCS[cfg.scs_khz]
    sym_per_sec = 14 * (2 ** mu) * 1000  # 1/Ts
    bits_per_sec = (
        Fraction(cfg.layers)
        * cfg.modulation_order
        * cfg.scaling
        * cfg.code_rate_max
        * (cfg.n_prb * 12 * sym_per_sec)
        * (1 - cfg.overhead)
        * cfg.ul_symbol_fraction
    )
    return float(bits_per_sec / 1_000_000)


def _tdd_reference(bandwidth_mhz: float) -> UlLinkConfig:
    return UlLinkConfig(Duplex.TDD, bandwidth_mhz, 30,
                        ul_symbol_fraction=tdd_ul_fraction(TDD_DL7_UL2))


# The four FR1 carriers observed in the drive-test telemetry.
REFERENCE_CONFIGS: dict[BandClass, UlLinkConfig] = {
    BandClass.N28_700: UlLinkConfig(Duplex.FDD, 10, 15),
    BandClass.N3_1800: UlLinkConfig(Duplex.FDD, 15, 15),
    BandClass.N77_3400: _tdd_reference(40),
    BandClass.N77_3900: _tdd_reference(100),
}
