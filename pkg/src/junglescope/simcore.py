"""Synthetic TLS/LLSI response-image simulator.

Memory cells are laid out on a regular grid.  Each cell contains four
transistor sites; depending on the stored bit, one pair of sites draws
laser-induced signal and shows up as bright Gaussian spots in the response
image, while the other pair stays dark.  An optical image shows all four
sites dimly and carries no state information; it exists only so that the
stage drift injected per sample can be estimated and removed downstream.

All operations are pure functions of their inputs plus an integer seed and
reproduce byte-identically for a fixed environment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import TAG_SAMPLE, TAG_VICTIM, derive_rng

QUANT_MAX = 65535
MAX_CANVAS = 4096

# Optical rendering is state-independent by contract; brightness is tied to
# the geometry's amplitude so a single knob scales both image kinds.
OPTICAL_SITE_FRACTION = 0.25
OPTICAL_BACKGROUND_FRACTION = 0.2

REST_ZEROIZED = "rest-zeroized"
REST_RANDOMIZED = "rest-randomized"
MASKED_2SHARE = "masked-2share"
SCENARIOS = (REST_ZEROIZED, REST_RANDOMIZED, MASKED_2SHARE)


class SimConfigError(ValueError):
    """Invalid geometry, layout, keymap or optics configuration."""


@dataclass(frozen=True)
class CellGeometry:
    """Geometry of one memory cell.

    ``site_offsets`` holds four (x, y) positions in cell-local pixels: the
    first two light up for a stored 0, the last two for a stored 1 (TLS
    polarity; LLSI swaps the groups).
    """

    pitch_x: int = 10
    pitch_y: int = 18
    site_offsets: tuple[tuple[float, float], ...] = (
        (2.5, 4.5), (7.5, 13.5),   # bit-0 sites (diagonal)
        (7.5, 4.5), (2.5, 13.5),   # bit-1 sites (other diagonal)
    )
    spot_sigma: float = 1.5
    amplitude: float = 20000.0

    def __post_init__(self):
        if self.pitch_x < 4 or self.pitch_y < 4:
            raise SimConfigError("cell pitch must be at least 4 px per axis")
        if not self.spot_sigma > 0:
            raise SimConfigError("spot_sigma must be positive")
        if self.amplitude <= 0:
            raise SimConfigError("amplitude must be positive")
        if len(self.site_offsets) != 4:
            raise SimConfigError("exactly four transistor sites are required")
        g0, g1 = set(self.site_offsets[:2]), set(self.site_offsets[2:])
        if len(g0) != 2 or len(g1) != 2 or g0 & g1:
            raise SimConfigError("site groups must be disjoint point pairs")
        for x, y in self.site_offsets:
            if not (0 <= x < self.pitch_x and 0 <= y < self.pitch_y):
                raise SimConfigError("site offsets must lie inside the cell pitch")

    def group_sites(self, group: int) -> tuple[tuple[float, float], ...]:
        return self.site_offsets[:2] if group == 0 else self.site_offsets[2:]


@dataclass(frozen=True)
class MemoryLayout:
    """Placement of a cols x rows cell grid on a pixel canvas."""

    cols: int
    rows: int
    geometry: CellGeometry
    margin: int

    @property
    def n_cells(self) -> int:
        return self.cols * self.rows

    @property
    def width(self) -> int:
        return self.cols * self.geometry.pitch_x + 2 * self.margin

    @property
    def height(self) -> int:
        return self.rows * self.geometry.pitch_y + 2 * self.margin

    @property
    def canvas(self) -> tuple[int, int]:
        return (self.width, self.height)

    def cell_origin(self, index: int) -> tuple[int, int]:
        """Top-left pixel of cell `index` (row-major cell numbering)."""
        col, row = index % self.cols, index // self.cols
        return (self.margin + col * self.geometry.pitch_x,
                self.margin + row * self.geometry.pitch_y)

    def cell_center(self, index: int) -> tuple[float, float]:
        x0, y0 = self.cell_origin(index)
        return (x0 + self.geometry.pitch_x / 2.0, y0 + self.geometry.pitch_y / 2.0)

    def cell_site_positions(self, index: int) -> np.ndarray:
        """Absolute (x, y) of the four sites of cell `index`, shape (4, 2)."""
        x0, y0 = self.cell_origin(index)
        return np.array([(x0 + sx, y0 + sy) for sx, sy in self.geometry.site_offsets])

    def to_json_dict(self) -> dict:
        return {
            "cols": self.cols,
            "rows": self.rows,
            "margin": self.margin,
            "geometry": {
                "pitch_x": self.geometry.pitch_x,
                "pitch_y": self.geometry.pitch_y,
                "site_offsets": [list(s) for s in self.geometry.site_offsets],
                "spot_sigma": self.geometry.spot_sigma,
                "amplitude": self.geometry.amplitude,
            },
        }

    @staticmethod
    def from_json_dict(d: dict) -> "MemoryLayout":
        g = d["geometry"]
        geometry = CellGeometry(
            pitch_x=g["pitch_x"], pitch_y=g["pitch_y"],
            site_offsets=tuple(tuple(s) for s in g["site_offsets"]),
            spot_sigma=g["spot_sigma"], amplitude=g["amplitude"],
        )
        return build_layout(d["cols"], d["rows"], geometry, d["margin"])

    def layout_id(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def build_layout(cols: int, rows: int, geometry: CellGeometry, margin: int = 0) -> MemoryLayout:
    """Place a cols x rows grid of cells, surrounded by `margin` pixels."""
    if cols < 1 or rows < 1:
        raise SimConfigError("grid must contain at least one cell")
    if margin < 0:
        raise SimConfigError("margin must be non-negative")
    layout = MemoryLayout(cols=cols, rows=rows, geometry=geometry, margin=margin)
    if layout.width > MAX_CANVAS or layout.height > MAX_CANVAS:
        raise SimConfigError(f"canvas {layout.canvas} exceeds {MAX_CANVAS}x{MAX_CANVAS}")
    return layout


@dataclass(frozen=True)
class KeyMap:
    """Which cells hold the secret, and under which memory scenario."""

    key_bits: int
    assignment: tuple[int, ...]                       # bit index -> cell index
    scenario: str = REST_ZEROIZED
    mask_pairs: tuple[tuple[int, int], ...] = ()      # per key bit, share cells (x, y)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SimConfigError(f"unknown scenario {self.scenario!r}")
        if self.key_bits < 1:
            raise SimConfigError("key must contain at least one bit")
        if len(self.assignment) != self.key_bits:
            raise SimConfigError("assignment must map every key bit")
        if len(set(self.assignment)) != self.key_bits:
            raise SimConfigError("assignment must be injective")
        if self.scenario == MASKED_2SHARE:
            if len(self.mask_pairs) != self.key_bits:
                raise SimConfigError("masked scenario needs one share pair per key bit")
            for x, y in self.mask_pairs:
                if x == y:
                    raise SimConfigError("share cells of a pair must differ (x != y)")

    def validate_against(self, layout: MemoryLayout) -> None:
        if self.key_bits > layout.n_cells:
            raise SimConfigError("more key bits than memory cells")
        cells = set(self.assignment)
        for x, y in self.mask_pairs:
            cells.update((x, y))
        for c in cells:
            if not 0 <= c < layout.n_cells:
                raise SimConfigError(f"cell index {c} outside layout")

    def to_json_dict(self) -> dict:
        return {
            "key_bits": self.key_bits,
            "assignment": list(self.assignment),
            "scenario": self.scenario,
            "mask_pairs": [list(p) for p in self.mask_pairs],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "KeyMap":
        return KeyMap(
            key_bits=d["key_bits"],
            assignment=tuple(d["assignment"]),
            scenario=d["scenario"],
            mask_pairs=tuple(tuple(p) for p in d.get("mask_pairs", [])),
        )


@dataclass(frozen=True)
class OpticsParams:
    """Phenomenological acquisition knobs."""

    noise_sigma: float = 2000.0
    drift_range: float = 3.0
    modality: str = "TLS"
    background_level: float = 4000.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise SimConfigError("noise_sigma must be >= 0")
        if self.drift_range < 0:
            raise SimConfigError("drift_range must be >= 0")
        if self.modality not in ("TLS", "LLSI"):
            raise SimConfigError("modality must be TLS or LLSI")
        if self.background_level < 0:
            raise SimConfigError("background_level must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "drift_range": self.drift_range,
            "modality": self.modality,
            "background_level": self.background_level,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "OpticsParams":
        return OpticsParams(**d)


@dataclass
class SampleRecord:
    """One acquisition: response + optical image and the programmed secret.

    ``cell_bits`` and ``injected_drift`` are simulator-side ground truth; the
    attack pipeline must not read them (the masked-relabel helper and the
    test oracles are the sanctioned consumers).
    """

    id: int
    response: np.ndarray          # uint16 (H, W)
    optical: np.ndarray           # uint16 (H, W)
    secret_bits: np.ndarray       # uint8 (K,)
    cell_bits: np.ndarray         # uint8 (n_cells,), ground truth
    injected_drift: tuple[float, float]
    rng_seed: int
    applied_shift: tuple[float, float] | None = None


@dataclass
class Dataset:
    layout: MemoryLayout
    keymap: KeyMap
    optics: OpticsParams
    scenario: str
    records: list[SampleRecord] = field(default_factory=list)

    @property
    def layout_id(self) -> str:
        return self.layout.layout_id()

    def responses(self) -> np.ndarray:
        return np.stack([r.response for r in self.records])

    def labels(self) -> np.ndarray:
        return np.stack([r.secret_bits for r in self.records])


# ---------------------------------------------------------------------------
# rendering

def quantize(img: np.ndarray) -> np.ndarray:
    """Round half-to-even, clamp to the 16-bit range."""
    return np.clip(np.rint(img), 0, QUANT_MAX).astype(np.uint16)


def _site_patch(sites, sigma, amplitude):
    """Additive patch covering `sites` out to 4 sigma; returns (x0, y0, patch)."""
    reach = 4.0 * sigma
    xs = [s[0] for s in sites]
    ys = [s[1] for s in sites]
    x0 = int(np.floor(min(xs) - reach))
    y0 = int(np.floor(min(ys) - reach))
    x1 = int(np.ceil(max(xs) + reach))
    y1 = int(np.ceil(max(ys) + reach))
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1, dtype=np.float64),
                         np.arange(y0, y1 + 1, dtype=np.float64))
    patch = np.zeros_like(gx)
    for sx, sy in sites:
        r2 = (gx - sx) ** 2 + (gy - sy) ** 2
        patch += np.where(r2 <= reach * reach, np.exp(-r2 / (2.0 * sigma * sigma)), 0.0)
    return x0, y0, amplitude * patch


def _stamp(canvas: np.ndarray, x0: int, y0: int, patch: np.ndarray) -> None:
    h, w = patch.shape
    H, W = canvas.shape
    sy, sx = max(0, -y0), max(0, -x0)
    ey, ex = min(h, H - y0), min(w, W - x0)
    if sy < ey and sx < ex:
        canvas[y0 + sy:y0 + ey, x0 + sx:x0 + ex] += patch[sy:ey, sx:ex]


def _group_patches(geometry: CellGeometry, site_fraction: float = 1.0):
    """Bright-site patches for bit group 0 and 1 (cell-local coordinates)."""
    amp = geometry.amplitude * site_fraction
    return (_site_patch(geometry.group_sites(0), geometry.spot_sigma, amp),
            _site_patch(geometry.group_sites(1), geometry.spot_sigma, amp))


def render_field(layout: MemoryLayout, bits: np.ndarray, optics: OpticsParams) -> np.ndarray:
    """Noiseless, unquantized response field (float64)."""
    bits = as_bit_array(bits, layout.n_cells)
    field_img = np.full((layout.height, layout.width), float(optics.background_level))
    patches = _group_patches(layout.geometry)
    # LLSI polarity: the complementary transistor pair conducts for bit=1.
    flip = 1 if optics.modality == "LLSI" else 0
    for c in range(layout.n_cells):
        x0, y0 = layout.cell_origin(c)
        px, py, patch = patches[bits[c] ^ flip]
        _stamp(field_img, x0 + px, y0 + py, patch)
    return field_img


def render_response(layout: MemoryLayout, keymap: KeyMap, bits: np.ndarray,
                    optics: OpticsParams, seed: int) -> np.ndarray:
    """Render one state-dependent response image (uint16).

    `bits` is the full memory content, one bit per cell; how key bits were
    placed into it is the caller's business (see `generate_dataset`).
    """
    keymap.validate_against(layout)
    field_img = render_field(layout, bits, optics)
    peak = float(field_img.max())
    if peak > QUANT_MAX:
        raise SimConfigError(
            f"noiseless signal peaks at {peak:.0f}, beyond the 16-bit range; "
            "lower amplitude or background_level")
    if optics.noise_sigma > 0:
        rng = derive_rng(seed)
        field_img = field_img + rng.normal(0.0, optics.noise_sigma, field_img.shape)
    return quantize(field_img)


def render_optical(layout: MemoryLayout) -> np.ndarray:
    """State-independent structural image: all four sites dimly visible."""
    geometry = layout.geometry
    background = OPTICAL_BACKGROUND_FRACTION * geometry.amplitude
    img = np.full((layout.height, layout.width), background)
    p0, p1 = _group_patches(geometry, OPTICAL_SITE_FRACTION)
    for c in range(layout.n_cells):
        x0, y0 = layout.cell_origin(c)
        for px, py, patch in (p0, p1):
            _stamp(img, x0 + px, y0 + py, patch)
    return quantize(img)


def apply_drift(image: np.ndarray, dx: float, dy: float, fill: float = 0.0) -> np.ndarray:
    """Translate by (dx, dy) pixels with bilinear resampling.

    Output pixel (y, x) samples the input at (y - dy, x - dx); out-of-frame
    reads take `fill`.  uint16 input is re-quantized on the way out.
    """
    quantized = image.dtype == np.uint16
    src = image.astype(np.float64, copy=False)
    if dx == 0.0 and dy == 0.0:
        return image.copy()
    H, W = src.shape
    pad = 1 + int(np.ceil(max(abs(dx), abs(dy))))
    padded = np.full((H + 2 * pad, W + 2 * pad), float(fill))
    padded[pad:pad + H, pad:pad + W] = src
    ix, fx = int(np.floor(dx)), dx - np.floor(dx)
    iy, fy = int(np.floor(dy)), dy - np.floor(dy)
    # corner slices around the (possibly fractional) source position
    y0 = pad - iy - 1 if fy > 0 else pad - iy
    x0 = pad - ix - 1 if fx > 0 else pad - ix
    # weight of the +1 neighbour = frac(y - dy) = 1 - fy when fy > 0
    wy1, wx1 = 1.0 - fy if fy > 0 else 0.0, 1.0 - fx if fx > 0 else 0.0
    a = padded[y0:y0 + H, x0:x0 + W]
    b = padded[y0:y0 + H, x0 + 1:x0 + 1 + W]
    c = padded[y0 + 1:y0 + 1 + H, x0:x0 + W]
    d = padded[y0 + 1:y0 + 1 + H, x0 + 1:x0 + 1 + W]
    out = ((1 - wy1) * (1 - wx1) * a + (1 - wy1) * wx1 * b
           + wy1 * (1 - wx1) * c + wy1 * wx1 * d)
    return quantize(out) if quantized else out


def diff_image(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pixelwise a - b as signed int32."""
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a.astype(np.int32) - b.astype(np.int32)


def _area_weights(n_in: int, factor: float) -> np.ndarray:
    """Row-stochastic matrix mapping n_in samples to floor(n_in * factor)."""
    n_out = int(np.floor(n_in * factor))
    span = 1.0 / factor
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * span, (i + 1) * span
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    w /= w.sum(axis=1, keepdims=True)
    return w


def downscale(image: np.ndarray, factor: float) -> np.ndarray:
    """Area-average resampling; output dims = floor(dims * factor)."""
    if not 0 < factor <= 1:
        raise ValueError("factor must be in (0, 1]")
    H, W = image.shape
    out_h, out_w = int(np.floor(H * factor)), int(np.floor(W * factor))
    if out_h < 8 or out_w < 8:
        raise ValueError(f"downscaled size {out_w}x{out_h} below the 8x8 minimum")
    if factor == 1.0:
        return image.copy()
    quantized = image.dtype == np.uint16
    wy = _area_weights(H, factor)
    wx = _area_weights(W, factor)
    out = wy @ image.astype(np.float64) @ wx.T
    return quantize(out) if quantized else out


# ---------------------------------------------------------------------------
# datasets

def as_bit_array(bits, n: int) -> np.ndarray:
    """Accept '0101...' strings or arrays; return uint8 array of length n."""
    if isinstance(bits, str):
        arr = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(bits, dtype=np.uint8)
    if arr.shape != (n,) or arr.max(initial=0) > 1:
        raise ValueError(f"expected {n} bits of 0/1")
    return arr


def bits_to_hex(bits: np.ndarray) -> str:
    """Pack bits MSB-first into hex (bit 0 is the most significant)."""
    bits = np.asarray(bits, dtype=np.uint8)
    value = int("".join("1" if b else "0" for b in bits), 2) if len(bits) else 0
    return format(value, f"0{(len(bits) + 3) // 4}x")


def hex_to_bits(hexstr: str, n_bits: int) -> np.ndarray:
    value = int(hexstr, 16)
    return np.array([(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)],
                    dtype=np.uint8)


def _compose_memory(layout: MemoryLayout, keymap: KeyMap, rng: np.random.Generator):
    """Draw one memory snapshot; returns (cell_bits, secret_bits)."""
    n = layout.n_cells
    if keymap.scenario == MASKED_2SHARE:
        cell_bits = rng.integers(0, 2, n, dtype=np.uint8)
        secret = np.array([cell_bits[x] ^ cell_bits[y] for x, y in keymap.mask_pairs],
                          dtype=np.uint8)
        return cell_bits, secret
    secret = rng.integers(0, 2, keymap.key_bits, dtype=np.uint8)
    if keymap.scenario == REST_RANDOMIZED:
        cell_bits = rng.integers(0, 2, n, dtype=np.uint8)
    else:
        cell_bits = np.zeros(n, dtype=np.uint8)
    cell_bits[list(keymap.assignment)] = secret
    return cell_bits, secret


def _acquire(layout, keymap, optics, cell_bits, secret, sample_id, seed_key):
    """Render one drifted sample; drift hits response and optical alike."""
    rng = derive_rng(*seed_key)
    render_seed = int(rng.integers(0, 2 ** 62))
    dx, dy = (rng.uniform(-optics.drift_range, optics.drift_range, 2)
              if optics.drift_range > 0 else (0.0, 0.0))
    response = render_response(layout, keymap, cell_bits, optics, render_seed)
    optical = render_optical(layout)
    if dx != 0.0 or dy != 0.0:
        response = apply_drift(response, dx, dy, fill=optics.background_level)
        opt_bg = OPTICAL_BACKGROUND_FRACTION * layout.geometry.amplitude
        optical = apply_drift(optical, dx, dy, fill=opt_bg)
    return SampleRecord(
        id=sample_id, response=response, optical=optical,
        secret_bits=secret, cell_bits=cell_bits,
        injected_drift=(float(dx), float(dy)), rng_seed=render_seed,
    )


def generate_dataset(layout: MemoryLayout, keymap: KeyMap, optics: OpticsParams,
                     n_samples: int, seed: int) -> Dataset:
    """Simulated profiling acquisition: fresh random secret per sample."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    keymap.validate_against(layout)
    records = []
    for i in range(n_samples):
        rng = derive_rng(seed, TAG_SAMPLE, i)
        cell_bits, secret = _compose_memory(layout, keymap, rng)
        records.append(_acquire(layout, keymap, optics, cell_bits, secret,
                                i, (seed, TAG_SAMPLE, i, 1)))
    return Dataset(layout=layout, keymap=keymap, optics=optics,
                   scenario=keymap.scenario, records=records)


def generate_victim(layout: MemoryLayout, keymap: KeyMap, optics: OpticsParams,
                    key_bits: np.ndarray, n_images: int, seed: int) -> Dataset:
    """Victim-side acquisition: one fixed secret, several noisy scans."""
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    keymap.validate_against(layout)
    key_bits = as_bit_array(key_bits, keymap.key_bits)
    if keymap.scenario == MASKED_2SHARE:
        raise SimConfigError("victim generation for masked scenarios needs "
                             "explicit share values; compose cell bits manually")
    cell_bits = np.zeros(layout.n_cells, dtype=np.uint8)
    rng = derive_rng(seed, TAG_VICTIM)
    if keymap.scenario == REST_RANDOMIZED:
        cell_bits = rng.integers(0, 2, layout.n_cells, dtype=np.uint8)
    cell_bits[list(keymap.assignment)] = key_bits
    records = [
        _acquire(layout, keymap, optics, cell_bits, key_bits.copy(),
                 i, (seed, TAG_VICTIM, i))
        for i in range(n_images)
    ]
    return Dataset(layout=layout, keymap=keymap, optics=optics,
                   scenario=keymap.scenario, records=records)


def relabel_masked(dataset: Dataset, pairs) -> Dataset:
    """Re-label records with the XOR of two share cells per key bit.

    Needs per-cell ground truth in the records; images are untouched.
    """
    pairs = tuple((int(x), int(y)) for x, y in pairs)
    n_cells = dataset.layout.n_cells
    for x, y in pairs:
        if x == y:
            raise ValueError(f"share pair ({x}, {y}) must use distinct cells")
        if not (0 <= x < n_cells and 0 <= y < n_cells):
            raise ValueError(f"share pair ({x}, {y}) outside the {n_cells}-cell layout")
    if dataset.scenario not in (REST_RANDOMIZED, MASKED_2SHARE):
        raise ValueError("masked relabeling needs randomized memory content")
    # KeyMap wants an injective bit->cell assignment; pick one share per pair
    assignment, used = [], set()
    for x, y in pairs:
        cell = x if x not in used else y
        if cell in used:
            raise ValueError(f"cannot derive an injective assignment for pair ({x}, {y})")
        used.add(cell)
        assignment.append(cell)
    keymap = KeyMap(
        key_bits=len(pairs),
        assignment=tuple(assignment),
        scenario=MASKED_2SHARE,
        mask_pairs=pairs,
    )
    records = []
    for r in dataset.records:
        if r.cell_bits is None:
            raise ValueError(f"record {r.id} lacks per-cell ground truth")
        secret = np.array([r.cell_bits[x] ^ r.cell_bits[y] for x, y in pairs],
                          dtype=np.uint8)
        records.append(replace(r, secret_bits=secret))
    return Dataset(layout=dataset.layout, keymap=keymap, optics=dataset.optics,
                   scenario=MASKED_2SHARE, records=records)
