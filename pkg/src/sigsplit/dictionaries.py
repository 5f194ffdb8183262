"""Atom family generators for the experiment dictionaries.

All generators are deterministic: identical parameters give bitwise-identical
dictionaries. Atoms are sampled on a caller-supplied grid; the families are
damped oscillators, Gaussian pulses, translated cardinal cubic B-splines, and
Planck blackbody curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import SampledSignal, SamplingGrid
from .oblique import Dictionary

# Planck radiance constants as used by the blackbody family (cgs; wavelength
# in cm). First radiation constant in erg cm^2 s^-1, second in cm K.
PLANCK_C1 = 3.7419e-6
PLANCK_C2 = 1.4288

MICRON_TO_CM = 1e-4


@dataclass(frozen=True)
class AtomSpec:
    """Identity of one atom: family plus family-specific parameters."""

    family: str
    frequency: int | None = None
    center: float | None = None
    sharpness: float | None = None
    knot: int | None = None
    spacing: float | None = None
    temperature: float | None = None
    degenerate: bool = False

    def __post_init__(self):
        if self.family == "oscillator":
            if self.frequency is None or self.frequency < 1:
                raise ValueError(f"oscillator frequency must be >= 1, got {self.frequency}")
        elif self.family == "pulse":
            if self.sharpness is None or self.sharpness <= 0:
                raise ValueError("pulse sharpness must be positive")
        elif self.family == "bspline":
            if self.spacing is None or self.spacing <= 0:
                raise ValueError("bspline knot spacing must be positive")
        elif self.family == "blackbody":
            if self.temperature is None or self.temperature <= 0:
                raise ValueError("blackbody temperature must be positive")
        else:
            raise ValueError(f"unknown atom family {self.family!r}")

    def token(self) -> str:
        """Compact text form used as a CSV column header."""
        if self.family == "oscillator":
            body = f"oscillator n={self.frequency}"
        elif self.family == "pulse":
            body = f"pulse c={self.center!r} a={self.sharpness!r}"
        elif self.family == "bspline":
            body = f"bspline k={self.knot} b={self.spacing!r}"
        else:
            body = f"blackbody T={self.temperature!r}"
        return body + (" degenerate" if self.degenerate else "")

    @classmethod
    def from_token(cls, token: str) -> "AtomSpec":
        parts = token.split()
        family = parts[0]
        degenerate = parts[-1] == "degenerate"
        kv = dict(p.split("=", 1) for p in parts[1 : len(parts) - (1 if degenerate else 0)])
        if family == "oscillator":
            spec = cls(family, frequency=int(kv["n"]))
        elif family == "pulse":
            spec = cls(family, center=float(kv["c"]), sharpness=float(kv["a"]))
        elif family == "bspline":
            spec = cls(family, knot=int(kv["k"]), spacing=float(kv["b"]))
        elif family == "blackbody":
            spec = cls(family, temperature=float(kv["T"]))
        else:
            raise ValueError(f"unknown atom family in token {token!r}")
        return replace(spec, degenerate=degenerate) if degenerate else spec


def oscillator_atoms(freqs, grid: SamplingGrid) -> Dictionary:
    """Damped oscillators exp(-t) cos(pi n t), one atom per frequency n."""
    freqs = [int(n) for n in freqs]
    if not freqs:
        raise ValueError("need at least one frequency")
    if len(set(freqs)) != len(freqs):
        raise ValueError("duplicate oscillator frequency")
    t = grid.points()
    damping = np.exp(-t)
    atoms = np.column_stack([damping * np.cos(math.pi * n * t) for n in freqs])
    labels = tuple(AtomSpec("oscillator", frequency=n) for n in freqs)
    return Dictionary(atoms, labels, grid)


def gaussian_pulse_atoms(
    count: int, spacing: float, sharpness: float, grid: SamplingGrid
) -> Dictionary:
    """Gaussian pulses exp(-a (t - spacing*j)^2) for j = 1..count."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if spacing <= 0 or sharpness <= 0:
        raise ValueError("spacing and sharpness must be positive")
    last_center = spacing * count
    if last_center > grid.stop or spacing < grid.start - grid.stop:
        raise ValueError(
            f"pulse centers up to {last_center} fall outside the grid [{grid.start}, {grid.stop}]"
        )
    t = grid.points()
    centers = spacing * np.arange(1, count + 1)
    atoms = np.exp(-sharpness * (t[:, None] - centers[None, :]) ** 2)
    labels = tuple(AtomSpec("pulse", center=float(c), sharpness=float(sharpness)) for c in centers)
    return Dictionary(atoms, labels, grid)


def bspline_prototype(s: np.ndarray) -> np.ndarray:
    """Cardinal cubic B-spline on knots -2..2 (peak 2/3, support width 4)."""
    s = np.abs(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    near = s <= 1.0
    out[near] = 2.0 / 3.0 - s[near] ** 2 + 0.5 * s[near] ** 3
    far = (s > 1.0) & (s < 2.0)
    out[far] = (2.0 - s[far]) ** 3 / 6.0
    return out


def bspline_atoms(
    length: float,
    knot_spacing: float,
    grid: SamplingGrid,
    translate_step: float | None = None,
) -> Dictionary:
    """Translated cubic B-splines covering [0, length].

    One atom per translate index k = -1 .. ceil(length/step) + 1, centered at
    k*step, so the atom count is ceil(length/step) + 3. Translates whose
    support partially exits [0, length] are kept and simply sampled on-grid
    (a spanning set, not a basis). The translate step defaults to the knot
    spacing but may be finer to produce denser spanning sets.
    """
    if knot_spacing <= 0:
        raise ValueError("knot_spacing must be positive")
    if length < knot_spacing:
        raise ValueError("domain must cover at least one knot interval")
    step = knot_spacing if translate_step is None else float(translate_step)
    if step <= 0:
        raise ValueError("translate_step must be positive")
    t = grid.points()
    n_intervals = math.ceil(length / step)
    knots = range(-1, n_intervals + 2)
    atoms = np.column_stack(
        [bspline_prototype((t - k * step) / knot_spacing) for k in knots]
    )
    labels = tuple(AtomSpec("bspline", knot=int(k), spacing=float(step)) for k in knots)
    return Dictionary(atoms, labels, grid)


def planck_radiance(wavelength_um: np.ndarray, temperature: float) -> np.ndarray:
    """Blackbody spectral radiance C1 / (lam^5 (exp(C2/(lam T)) - 1)), lam in cm.

    Evaluated via exp(-x) to stay finite for short wavelengths where exp(x)
    overflows; the curve tends to zero there.
    """
    lam = np.asarray(wavelength_um, dtype=float) * MICRON_TO_CM
    if np.any(lam <= 0):
        raise ValueError("wavelengths must be positive")
    x = PLANCK_C2 / (lam * temperature)
    decay = np.exp(-x)
    return PLANCK_C1 * decay / (lam**5 * (1.0 - decay))


def blackbody_atoms(temps, grid: SamplingGrid, normalize: str = "none") -> Dictionary:
    """Planck curves over a wavelength grid in microns, one atom per temperature.

    normalize: "none" keeps raw radiance values; "peak" rescales each curve to
    unit maximum (the spanned subspace is unchanged, but summed backgrounds
    become comparable to order-one spectra).
    """
    temps = [float(T) for T in temps]
    if not temps:
        raise ValueError("need at least one temperature")
    if grid.start <= 0:
        raise ValueError("blackbody grid must start at a positive wavelength")
    if normalize not in ("none", "peak"):
        raise ValueError(f"unknown normalize mode {normalize!r}")
    lam_um = grid.points()
    columns = []
    for T in temps:
        y = planck_radiance(lam_um, T)
        if normalize == "peak":
            y = y / y.max()
        columns.append(y)
    labels = tuple(AtomSpec("blackbody", temperature=T) for T in temps)
    return Dictionary(np.column_stack(columns), labels, grid)


def legacy_weighted_register(grid: SamplingGrid) -> SampledSignal:
    """Fixed reference signal: 100 damped oscillators with weights peaked at n=75."""
    t = grid.points()
    values = np.zeros_like(t)
    for n in range(1, 101):
        values += np.exp(-t) * np.cos(math.pi * n * t) / (1.0 + 0.7 * (n - 75) ** 2)
    return SampledSignal(values, grid)


def dictionary_to_csv(dictionary: Dictionary, path) -> None:
    """One atom per column; first column is the grid, header row carries labels."""
    header = ["grid"] + [
        label.token() if isinstance(label, AtomSpec) else str(label)
        for label in dictionary.labels
    ]
    data = np.column_stack([dictionary.grid.points(), dictionary.atoms])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def dictionary_from_csv(path) -> Dictionary:
    """Read back a dictionary written by dictionary_to_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.strip().split(","))) for line in fh if line.strip()]
    data = np.asarray(rows)
    grid_points = data[:, 0]
    grid = SamplingGrid(float(grid_points[0]), float(grid_points[-1]), len(grid_points))
    labels = []
    for token in header[1:]:
        try:
            labels.append(AtomSpec.from_token(token))
        except (ValueError, KeyError):
            labels.append(token)
    return Dictionary(data[:, 1:], tuple(labels), grid)
