"""Rendering and perception of panels.

Rendering draws each entity as a regular polygon (or circle) in its slot
cell: black outline, grayscale fill from a 10-step palette, optional
rotation.  Perception inverts that: binarize, split into 8-connected
blobs per component window, match each blob's hole-filled support against
a template bank rendered through the exact same pipeline (so a clean
round trip scores IoU 1.0), and read the fill color back as the median
interior intensity snapped to the palette.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .core import (
    ANGLE_DEGREES,
    AttributeKind,
    Cell,
    Component,
    Configuration,
    Layout,
    TYPE_EDGES,
    encode_position,
    get_layout,
    modal_value,
)
from .errors import ContractViolation, PerceptionError, UnrecognizedEntityError
from .generator import Entity, PanelEntities
from .pixelops import fill_holes, label_components

#: 10 gray levels evenly spaced 255 -> 0; index = Color ordinal.
PALETTE = np.array([255, 227, 198, 170, 142, 113, 85, 57, 28, 0], dtype=np.uint8)

#: foreground = anything darker than this (white background excluded)
BINARIZE_THRESHOLD = 250

#: pixels at or below this intensity are treated as outline when reading
#: the fill color back
OUTLINE_INTENSITY_CUT = 20

#: minimum acceptable template IoU before a blob counts as unrecognized
MATCH_THRESHOLD = 0.85


@dataclass(frozen=True)
class PanelRaster:
    """Grayscale image of one panel (square, >= 64 px)."""

    pixels: np.ndarray
    provenance: str = "generated"

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ContractViolation(f"panel raster must be square, got {px.shape}")
        if px.shape[0] < 64:
            raise ContractViolation(f"panel raster below 64 px minimum: {px.shape[0]}")
        if px.dtype != np.uint8:
            raise ContractViolation("panel raster must be 8-bit grayscale")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


# ---------------------------------------------------------------------------
# Analytic geometry
# ---------------------------------------------------------------------------


def _coverage(
    type_ord: int,
    radius: float,
    angle_deg: float,
    cx: float,
    cy: float,
    window: tuple[int, int, int, int],
    inset: float,
    ss: int,
) -> np.ndarray:
    """Fraction of each pixel inside the (optionally inset) shape.

    Membership is evaluated at ``ss``x``ss`` subpixel centers; ss=1 gives
    a crisp binary image, larger values antialias edge pixels only.
    """
    r0, r1, c0, c1 = window
    offs = (np.arange(ss) + 0.5) / ss
    ys = (np.arange(r0, r1)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(c0, c1)[:, None] + offs[None, :]).reshape(-1)
    dy = ys[:, None, None] - cy  # (H*ss, 1, 1)
    dx = xs[None, :, None] - cx  # (1, W*ss, 1)

    edges = TYPE_EDGES[type_ord]
    if edges == 0:  # circle
        lim = radius - inset
        inside = (dx * dx + dy * dy) <= lim * lim if lim > 0 else np.zeros((len(ys), len(xs), 1), bool)
        inside = np.broadcast_to(inside, (len(ys), len(xs), 1))
    else:
        apothem = radius * math.cos(math.pi / edges) - inset
        if apothem <= 0:
            return np.zeros((r1 - r0, c1 - c0))
        base = math.radians(angle_deg) + math.pi / edges + math.pi / 2.0
        phis = base + 2.0 * math.pi * np.arange(edges) / edges
        proj = dx * np.cos(phis)[None, None, :] + dy * np.sin(phis)[None, None, :]
        inside = np.all(proj <= apothem, axis=2)[..., None]

    inside = inside.reshape(r1 - r0, ss, c1 - c0, ss, -1)[..., 0]
    return inside.mean(axis=(1, 3))


def outline_width(type_ord: int, radius: float) -> float:
    """Nominal 2 px outline, narrowed to 1 px when the shape is too small
    to keep any pure-fill interior behind a 2 px band."""
    edges = TYPE_EDGES[type_ord]
    apothem = radius if edges == 0 else radius * math.cos(math.pi / edges)
    return 2.0 if apothem - 2.0 >= 1.0 else 1.0


def draw_entity(
    canvas: np.ndarray,
    cell: Cell,
    entity: Entity,
    radius: float,
    ss: int = 1,
    clip: Cell | None = None,
) -> None:
    """Rasterize one entity into its cell window (in place)."""
    window = cell.pixel_window()
    cx, cy = cell.center
    angle = ANGLE_DEGREES[entity.angle]
    w = outline_width(entity.type, radius)
    cov_outer = _coverage(entity.type, radius, angle, cx, cy, window, 0.0, ss)
    cov_inner = _coverage(entity.type, radius, angle, cx, cy, window, w, ss)
    if clip is not None:
        keep = ~_window_mask_local(clip, window)
        cov_outer = cov_outer * keep
        cov_inner = cov_inner * keep
    fill = float(PALETTE[entity.color])
    r0, r1, c0, c1 = window
    region = canvas[r0:r1, c0:c1].astype(float)
    # background weighted out by total coverage; outline band is black
    value = region * (1.0 - cov_outer) + 0.0 * (cov_outer - cov_inner) + fill * cov_inner
    canvas[r0:r1, c0:c1] = np.rint(value).astype(np.uint8)


def _window_mask_local(clip: Cell, window: tuple[int, int, int, int]) -> np.ndarray:
    r0, r1, c0, c1 = window
    cr0, cr1, cc0, cc1 = clip.pixel_window()
    mask = np.zeros((r1 - r0, c1 - c0), dtype=bool)
    rr0, rr1 = max(cr0, r0) - r0, min(cr1, r1) - r0
    cc0_, cc1_ = max(cc0, c0) - c0, min(cc1, c1) - c0
    if rr0 < rr1 and cc0_ < cc1_:
        mask[rr0:rr1, cc0_:cc1_] = True
    return mask


def render_panel(entities: PanelEntities | Sequence[Mapping[int, Entity]], layout: Layout, ss: int = 1) -> PanelRaster:
    """White background, one entity per occupied slot, components drawn in
    layout order (nested components never overlap because the outer entity
    is clipped out of the inner window)."""
    px = layout.panel_px
    canvas = np.full((px, px), 255, dtype=np.uint8)
    if not isinstance(entities, Mapping):
        entities = {comp.name: per for comp, per in zip(layout.components, entities)}
    for comp in layout.components:
        per_slot = entities.get(comp.name, {})
        for slot, ent in per_slot.items():
            if not (0 <= slot < comp.slot_count):
                raise ContractViolation(f"slot {slot} out of range for {comp.name}")
            draw_entity(canvas, comp.cells[slot], ent, comp.radius_for(ent.size), ss=ss, clip=comp.clip)
    return PanelRaster(pixels=canvas)


# ---------------------------------------------------------------------------
# Template bank
# ---------------------------------------------------------------------------


@dataclass
class TemplateBank:
    """Hole-filled binary supports for every (type, size, angle) a
    component can draw, rendered through the same pipeline as real panels."""

    keys: list[tuple[int, int, int]]
    stack: np.ndarray  # (n, h, w) bool
    areas: np.ndarray  # (n,) int


@lru_cache(maxsize=256)
def _template_bank(config: Configuration, panel_px: int, comp_index: int, slot: int, ss: int) -> TemplateBank:
    # banks are per slot: fractional cell boundaries give neighboring grid
    # cells different pixel-window sizes and subpixel centers
    layout = get_layout(config, panel_px)
    comp = layout.components[comp_index]
    cell = comp.cells[slot]
    cw = cell.pixel_window()
    keys = []
    masks = []
    for t in comp.type_values:
        for s in comp.size_values:
            for a in range(len(ANGLE_DEGREES)):
                canvas = np.full((panel_px, panel_px), 255, dtype=np.uint8)
                # color 9 (black fill) makes the support solid regardless
                # of outline width
                draw_entity(canvas, cell, Entity(t, s, 9, a), comp.radius_for(s), ss=ss)
                crop = canvas[cw[0]:cw[1], cw[2]:cw[3]]
                support = fill_holes(crop < BINARIZE_THRESHOLD)
                keys.append((t, s, a))
                masks.append(support)
    stack = np.stack(masks)
    return TemplateBank(keys=keys, stack=stack, areas=stack.sum(axis=(1, 2)))


def template_bank(layout: Layout, comp: Component, slot: int = 0, ss: int = 1) -> TemplateBank:
    return _template_bank(layout.config, layout.panel_px, layout.components.index(comp), slot, ss)


# ---------------------------------------------------------------------------
# Perception
# ---------------------------------------------------------------------------


@dataclass
class EntityBlob:
    """One segmented entity: pixel mask, bounding box, centroid and the
    slot/cell geometry it was matched to."""

    slot: int
    mask: np.ndarray        # bool, panel-shaped
    bbox: tuple[int, int, int, int]  # r0, r1, c0, c1 (half-open)
    centroid: tuple[float, float]    # (x, y) in panel coordinates
    component: Component
    cell: Cell
    clip_mask: np.ndarray | None = None  # pixels excluded from this component


@dataclass
class ComponentPerception:
    number: int
    position: int
    blobs: list[EntityBlob]


@dataclass
class PerceivedComponent:
    """Attribute tuple recovered for one component; per-entity values are
    kept alongside the modal cell values."""

    name: str
    number: int
    position: int
    type: int | None
    size: int | None
    color: int | None
    entities: list[tuple[int, int, int, int]]  # (slot, type, size, color)

    def as_values(self) -> dict[AttributeKind, int]:
        return {
            AttributeKind.NUMBER: self.number,
            AttributeKind.POSITION: self.position,
            AttributeKind.TYPE: self.type if self.type is not None else 0,
            AttributeKind.SIZE: self.size if self.size is not None else 0,
            AttributeKind.COLOR: self.color if self.color is not None else 0,
        }


def _component_fg(raster: PanelRaster, comp: Component) -> tuple[np.ndarray, np.ndarray | None]:
    fg = raster.pixels < BINARIZE_THRESHOLD
    keep = np.zeros_like(fg)
    for cell in comp.cells:
        r0, r1, c0, c1 = cell.pixel_window()
        keep[r0:r1, c0:c1] = True
    clip_mask = None
    if comp.clip is not None:
        r0, r1, c0, c1 = comp.clip.pixel_window()
        clip_mask = np.zeros_like(fg)
        clip_mask[r0:r1, c0:c1] = True
        keep &= ~clip_mask
    return fg & keep, clip_mask


def segment_component(raster: PanelRaster, comp: Component) -> ComponentPerception:
    """8-connected blobs of one component's windows; occupancy comes from
    which cell each blob centroid lands in (thin strokes cross pixel
    diagonals, so 4-connectivity would shatter rotated outlines)."""
    fg, clip_mask = _component_fg(raster, comp)
    labels, count = label_components(fg)
    occupancy = [False] * comp.slot_count
    blobs: list[EntityBlob] = []
    for lab in range(1, count + 1):
        mask = labels == lab
        rows, cols = np.nonzero(mask)
        cy = float(rows.mean()) + 0.5
        cx = float(cols.mean()) + 0.5
        slot = comp.slot_of(cx, cy)
        if slot is None:
            raise PerceptionError(f"blob centroid ({cx:.1f},{cy:.1f}) falls in no slot of {comp.name}")
        if occupancy[slot]:
            raise PerceptionError(f"multiple blobs in slot {slot} of component {comp.name}")
        occupancy[slot] = True
        blobs.append(
            EntityBlob(
                slot=slot,
                mask=mask,
                bbox=(int(rows.min()), int(rows.max()) + 1, int(cols.min()), int(cols.max()) + 1),
                centroid=(cx, cy),
                component=comp,
                cell=comp.cells[slot],
                clip_mask=clip_mask,
            )
        )
    blobs.sort(key=lambda b: b.slot)
    return ComponentPerception(
        number=len(blobs), position=encode_position(occupancy), blobs=blobs
    )


def segment_entities(raster: PanelRaster, layout: Layout) -> list[ComponentPerception]:
    """Per-component segmentation: blob list, entity count, occupancy mask."""
    if raster.width != layout.panel_px:
        raise PerceptionError(
            f"raster is {raster.width} px but layout expects {layout.panel_px} px"
        )
    return [segment_component(raster, comp) for comp in layout.components]


def _blob_support(blob: EntityBlob) -> np.ndarray:
    """Hole-filled support of a blob within its cell window."""
    r0, r1, c0, c1 = blob.cell.pixel_window()
    return fill_holes(blob.mask[r0:r1, c0:c1])


def classify_type_size(blob: EntityBlob, raster: PanelRaster, layout: Layout, ss: int = 1) -> tuple[int, int]:
    """Best (type, size) by intersection-over-union against the component's
    template bank; raises when even the best match is unconvincing."""
    bank = template_bank(layout, blob.component, blob.slot, ss)
    support = _blob_support(blob)
    area = int(support.sum())
    inter = np.logical_and(bank.stack, support).sum(axis=(1, 2))
    union = bank.areas + area - inter
    scores = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    best = int(np.argmax(scores))
    if scores[best] < MATCH_THRESHOLD:
        t, s, a = bank.keys[best]
        raise UnrecognizedEntityError(
            f"best template (type={t}, size={s}, angle={a}) only reaches IoU {scores[best]:.3f}"
        )
    t, s, _a = bank.keys[best]
    return t, s


def extract_color(blob: EntityBlob, raster: PanelRaster) -> int:
    """Median interior intensity snapped to the nearest palette entry.

    Outline pixels are dropped by intensity; a shape whose fill is itself
    black simply medians to black.  Pixels carved out for a nested
    component never count."""
    r0, r1, c0, c1 = blob.cell.pixel_window()
    support = _blob_support(blob)
    region = np.zeros(blob.mask.shape, dtype=bool)
    region[r0:r1, c0:c1] = support
    if blob.clip_mask is not None:
        region &= ~blob.clip_mask
    values = raster.pixels[region]
    interior = values[values > OUTLINE_INTENSITY_CUT]
    if interior.size == 0:
        interior = values
    median = float(np.median(interior))
    return int(np.argmin(np.abs(PALETTE.astype(float) - median)))


def perceive_panel(raster: PanelRaster, layout: Layout, ss: int = 1) -> list[PerceivedComponent]:
    """Full perception pass: per component, recover entity count,
    occupancy, and the modal type/size/color (empty components report
    ``None`` for the shape attributes)."""
    out: list[PerceivedComponent] = []
    for comp, seg in zip(layout.components, segment_entities(raster, layout)):
        entities = []
        for blob in seg.blobs:
            try:
                t, s = classify_type_size(blob, raster, layout, ss)
                c = extract_color(blob, raster)
            except PerceptionError as exc:
                raise PerceptionError(f"{comp.name}/slot {blob.slot}: {exc}") from exc
            entities.append((blob.slot, t, s, c))
        if entities:
            out.append(
                PerceivedComponent(
                    name=comp.name,
                    number=seg.number,
                    position=seg.position,
                    type=modal_value([e[1] for e in entities]),
                    size=modal_value([e[2] for e in entities]),
                    color=modal_value([e[3] for e in entities]),
                    entities=entities,
                )
            )
        else:
            out.append(
                PerceivedComponent(
                    name=comp.name, number=0, position=0, type=None, size=None, color=None, entities=[]
                )
            )
    return out


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


def save_png(raster: PanelRaster, path) -> None:
    from PIL import Image

    Image.fromarray(raster.pixels, mode="L").save(path, format="PNG")


def load_png(path, provenance: str = "external") -> PanelRaster:
    from PIL import Image

    with Image.open(path) as img:
        pixels = np.asarray(img.convert("L"), dtype=np.uint8)
    return PanelRaster(pixels=pixels, provenance=provenance)
