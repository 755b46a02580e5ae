"""LED-array illumination, pupils, the coherent forward model, and the
weak-phase transfer function.

Geometry convention: LED (row, col) offsets from the centre LED map to
lateral position (x, y) = (col_offset * pitch, -row_offset * pitch), i.e.
x points right and y up.  Spatial frequencies are kept in array order
(f_row, f_col), cycles per micrometre, matching raster axes.

An LED tilts the illumination by a plane wave of frequency u_led; the
camera-plane spectrum is the object spectrum window centred at -u_led
multiplied by the pupil, so the unscattered beam crosses the pupil at
+u_led.  This is the convention the transfer function below is exact for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyRegion,
    FrequencyOutOfGrid,
    IndexOutOfRange,
    NegativeIntensity,
    NonFiniteInput,
    SizeMismatch,
    ZeroBackground,
)
from .grid import ComplexRaster, RealRaster, fft2_unitary, freq_axis, ifft2_unitary

__all__ = [
    "LedArrayGeometry",
    "IlluminationPattern",
    "Pupil",
    "led_frequency",
    "design_patterns",
    "make_pupil",
    "forward_single_led",
    "synthesize_multiplexed",
    "phase_transfer_function",
    "add_noise",
]


@dataclass(frozen=True)
class LedArrayGeometry:
    """Planar LED matrix a fixed height above the sample.

    pitch_led and height are millimetres; wavelength is micrometres.
    LEDs are addressed by flat index row * cols + col.
    """

    rows: int
    cols: int
    pitch_led: float
    height: float
    wavelength: float
    center: tuple[int, int]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise SizeMismatch("LED grid must contain at least one LED")
        for v in (self.pitch_led, self.height, self.wavelength):
            if not (v > 0 and math.isfinite(v)):
                raise NonFiniteInput(f"geometry lengths must be positive, got {v}")
        cr, cc = self.center
        if not (0 <= cr < self.rows and 0 <= cc < self.cols):
            raise IndexOutOfRange(f"center {self.center} outside {self.rows}x{self.cols} grid")

    @property
    def n_leds(self) -> int:
        return self.rows * self.cols

    def offsets(self, led: int) -> tuple[int, int]:
        """(row, col) offset of an LED from the centre LED."""
        if not 0 <= led < self.n_leds:
            raise IndexOutOfRange(f"led {led} outside 0..{self.n_leds - 1}")
        return divmod(led, self.cols)[0] - self.center[0], led % self.cols - self.center[1]

    def led_na(self, led: int) -> float:
        dr, dc = self.offsets(led)
        r = math.hypot(dr, dc) * self.pitch_led
        return math.sin(math.atan2(r, self.height))

    def led_angle_deg(self, led: int) -> float:
        """Direction of the LED in the x-right / y-up frame, degrees."""
        dr, dc = self.offsets(led)
        return math.degrees(math.atan2(-dr, dc))

    def max_na(self) -> float:
        return max(self.led_na(i) for i in range(self.n_leds))


def led_frequency(geometry: LedArrayGeometry, led: int) -> tuple[np.ndarray, float]:
    """Illumination spatial frequency (f_row, f_col) in cycles/um, plus NA.

    Magnitude is sin(atan(r/height)) / wavelength, i.e. the illumination NA
    over the wavelength; direction follows the LED offset from centre.
    """
    dr, dc = geometry.offsets(led)
    r = math.hypot(dr, dc)
    na = geometry.led_na(led)
    if r == 0.0:
        return np.zeros(2), 0.0
    return (na / geometry.wavelength) * np.array([dr, dc]) / r, na


def _wrapped_angle_distance(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def _sector(
    geometry: LedArrayGeometry,
    na_lo: float,
    na_hi: float,
    center_deg: float,
    width_deg: float,
) -> list[int]:
    """LEDs with na_lo < NA <= na_hi inside a closed angular sector.

    The zero-offset LED (undefined angle) belongs to every sector whose NA
    band admits it.
    """
    chosen = []
    for led in range(geometry.n_leds):
        na = geometry.led_na(led)
        if not (na_lo < na <= na_hi):
            continue
        if na == 0.0 or _wrapped_angle_distance(geometry.led_angle_deg(led), center_deg) <= width_deg / 2.0:
            chosen.append(led)
    return chosen


@dataclass(frozen=True)
class IlluminationPattern:
    """Weighted LED set switched on together; weights are exposure factors."""

    label: str
    leds: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if len(self.leds) == 0:
            raise EmptyRegion(f"pattern {self.label!r} contains no LEDs")
        for led, w in self.leds:
            if not (w > 0 and math.isfinite(w)):
                raise NonFiniteInput(f"pattern weight must be positive, got {w}")

    @property
    def led_indices(self) -> list[int]:
        return [led for led, _ in self.leds]


def design_patterns(
    geometry: LedArrayGeometry, na_obj: float, na_max: float
) -> list[IlluminationPattern]:
    """Five-pattern multiplexed illumination: 2 brightfield + 3 darkfield.

    Brightfield (NA <= na_obj): two 270-degree sectors centred up and right.
    Together they cover the whole brightfield disc while each keeps a
    point-asymmetric LED set, and their asymmetry axes sit 90 degrees apart,
    which is what the phase transfer functions need for full Fourier
    coverage.  Darkfield (na_obj < NA <= na_max): three 120-degree sectors
    centred at 90/210/330 degrees tile the annulus exactly.  All weights
    are 1.
    """
    if not (0 < na_obj < na_max):
        raise NonFiniteInput(f"need 0 < na_obj < na_max, got {na_obj}, {na_max}")
    sectors = [
        ("bf-up", 0.0, na_obj, 90.0, 270.0),
        ("bf-right", 0.0, na_obj, 0.0, 270.0),
        ("df-90", na_obj, na_max, 90.0, 120.0),
        ("df-210", na_obj, na_max, 210.0, 120.0),
        ("df-330", na_obj, na_max, 330.0, 120.0),
    ]
    patterns = []
    for label, lo, hi, center, width in sectors:
        leds = _sector(geometry, -1.0 if lo == 0.0 else lo, hi, center, width)
        if not leds:
            raise EmptyRegion(f"no LEDs available for pattern {label!r}")
        patterns.append(IlluminationPattern(label, tuple((led, 1.0) for led in leds)))
    return patterns


@dataclass(frozen=True)
class Pupil:
    """Binary circular aperture on a centered frequency grid."""

    raster: ComplexRaster
    na: float
    wavelength: float


def make_pupil(
    na: float, wavelength: float, shape: tuple[int, int], pitch: float
) -> Pupil:
    h, w = shape
    fr = freq_axis(h, pitch)[:, None]
    fc = freq_axis(w, pitch)[None, :]
    cutoff = na / wavelength
    mask = (fr**2 + fc**2 <= cutoff**2).astype(np.complex128)
    return Pupil(ComplexRaster(mask, pitch), na, wavelength)


def _spectrum_window(
    spectrum: np.ndarray, shift_bins: tuple[int, int], out_shape: tuple[int, int]
) -> np.ndarray:
    """Sub-block of a centered spectrum, centred at (-shift) from DC."""
    H, W = spectrum.shape
    h, w = out_shape
    r0 = H // 2 - shift_bins[0] - h // 2
    c0 = W // 2 - shift_bins[1] - w // 2
    if r0 < 0 or c0 < 0 or r0 + h > H or c0 + w > W:
        raise FrequencyOutOfGrid(
            f"illumination shift {shift_bins} pushes the passband outside the grid"
        )
    return spectrum[r0 : r0 + h, c0 : c0 + w]


def forward_single_led(
    obj: ComplexRaster,
    pupil: Pupil,
    u_led: np.ndarray,
    detector_shape: tuple[int, int],
) -> RealRaster:
    """Intensity recorded under one tilted plane-wave illumination.

    The object spectrum window centred at -u_led (nearest grid bin) is
    multiplied by the pupil and inverse-transformed on the detector grid;
    the window carries the crop amplitude scale so a flat unit object maps
    to unit intensity.
    """
    H, W = obj.shape
    h, w = detector_shape
    if pupil.raster.shape != (h, w):
        raise SizeMismatch(f"pupil grid {pupil.raster.shape} != detector {detector_shape}")
    if h < 2 or w < 2 or H % h != 0 or W % w != 0:
        raise SizeMismatch(f"detector {detector_shape} must divide object grid {obj.shape}")
    spectrum = fft2_unitary(obj)
    df_r = 1.0 / (H * obj.pitch)
    df_c = 1.0 / (W * obj.pitch)
    s = (round(float(u_led[0]) / df_r), round(float(u_led[1]) / df_c))
    scale = math.sqrt((h * w) / (H * W))
    window = _spectrum_window(spectrum.data, s, (h, w)) * scale
    field = ifft2_unitary(ComplexRaster(window * pupil.raster.data, obj.pitch * (H / h)))
    return RealRaster(np.abs(field.data) ** 2, field.pitch)


def synthesize_multiplexed(
    obj: ComplexRaster,
    pupil: Pupil,
    pattern: IlluminationPattern,
    geometry: LedArrayGeometry,
    detector_shape: tuple[int, int],
) -> RealRaster:
    """Incoherent weighted sum of single-LED intensities for one pattern."""
    total = np.zeros(detector_shape)
    out_pitch = None
    for led, weight in pattern.leds:
        u, _ = led_frequency(geometry, led)
        img = forward_single_led(obj, pupil, u, detector_shape)
        total += weight * img.data
        out_pitch = img.pitch
    return RealRaster(total, out_pitch)


def _reflect_center(a: np.ndarray) -> np.ndarray:
    """Map samples at +u to -u on an even centered grid."""
    return np.roll(a[::-1, ::-1], (1, 1), axis=(0, 1))


def phase_transfer_function(
    pattern: IlluminationPattern,
    pupil: Pupil,
    geometry: LedArrayGeometry,
) -> ComplexRaster:
    """Weak-phase transfer function of a weighted LED pattern.

    H(u) = i [C(u) - C*(-u)] / B with C(u) = sum_j w_j P*(u_j) P(u_j + u)
    and B = sum_j w_j |P(u_j)|^2.  Purely imaginary and odd for a real
    pupil; identically zero for point-symmetric patterns.
    """
    P = pupil.raster.data
    h, w = P.shape
    df_r = 1.0 / (h * pupil.raster.pitch)
    df_c = 1.0 / (w * pupil.raster.pitch)
    C = np.zeros_like(P)
    B = 0.0
    for led, weight in pattern.leds:
        u, _ = led_frequency(geometry, led)
        s_r = round(float(u[0]) / df_r)
        s_c = round(float(u[1]) / df_c)
        r_i, c_i = h // 2 + s_r, w // 2 + s_c
        # an LED beyond the sampled frequency grid is outside the pupil
        if not (0 <= r_i < h and 0 <= c_i < w):
            continue
        p_j = P[r_i, c_i]
        B += weight * abs(p_j) ** 2
        if p_j != 0.0:
            # roll so sample k reads P(u_j + u_k)
            C += weight * np.conj(p_j) * np.roll(P, (-s_r, -s_c), axis=(0, 1))
    if B == 0.0:
        raise ZeroBackground(f"pattern {pattern.label!r} passes no light through the pupil")
    Htf = 1j * (C - _reflect_center(np.conj(C))) / B
    return ComplexRaster(Htf, pupil.raster.pitch)


def add_noise(img: RealRaster, model: tuple[str, float], seed: int) -> RealRaster:
    """Measurement noise: ("gaussian", sigma) or ("poisson", photons_per_unit)."""
    kind, level = model
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        return RealRaster(img.data + level * rng.standard_normal(img.shape), img.pitch)
    if kind == "poisson":
        if np.any(img.data < 0):
            raise NegativeIntensity("poisson noise needs a non-negative image")
        if not level > 0:
            raise NonFiniteInput(f"photon count must be positive, got {level}")
        return RealRaster(rng.poisson(img.data * level) / level, img.pitch)
    raise NonFiniteInput(f"unknown noise model {kind!r}")
