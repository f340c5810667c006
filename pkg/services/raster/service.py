"""
2026 Module responsible for label-mask algebra: class areas, connected
components, masking and relabeling.

Everything works on row bands of ``tile_rows`` rows, so peak memory follows
the band size rather than the mask size.
"""
import logging
from typing import Callable, Collection, Dict, Iterator, List, Mapping, Tuple, Union

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import connected_components as graph_components

from services.config import get_settings
from services.exceptions import MissingAssignment, ShapeMismatch
from services.raster.mask import LabelMask, canonicalize
from services.raster.schemas import (
    COMPONENT_CLASSES,
    MAX_CLASS_CODE,
    ClassAreas,
    Component,
    TissueClass,
)

logger = logging.getLogger(__name__)

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}
_N_CLASSES = MAX_CLASS_CODE + 1
_COMPONENT_TABLE = np.zeros(_N_CLASSES, dtype=bool)
_COMPONENT_TABLE[[int(c) for c in COMPONENT_CLASSES]] = True
# label images are int32; a labeled band never holds more pixels than this
LABEL_BAND_PIXELS = 1 << 21

ClassPredicate = Union[Callable[[TissueClass], bool], Collection[TissueClass], LabelMask]


def _tile_rows(tile_rows: int | None) -> int:
    return int(tile_rows) if tile_rows else get_settings().TILE_ROWS


def _structure(connectivity: int) -> np.ndarray:
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    return _STRUCTURES[connectivity]


def class_areas(m: LabelMask, tile_rows: int | None = None) -> ClassAreas:
    """
    Count the pixels of every tissue class from the runs, without decoding.
    :param m: The mask to measure.
    :param tile_rows: Rows summed per step; defaults to the configured tile size.
    :return: Exact per-class pixel counts summing to width x height.
    """
    rows = _tile_rows(tile_rows)
    counts = np.zeros(_N_CLASSES, dtype=np.int64)
    for y0 in range(0, m.height, rows):
        s = m.row_offsets[y0]
        e = m.row_offsets[min(m.height, y0 + rows)]
        # float weights stay exact: a band holds far fewer than 2**53 pixels
        band_counts = np.bincount(m.values[s:e], weights=m.lengths[s:e], minlength=_N_CLASSES)
        counts += band_counts.astype(np.int64)
    return ClassAreas(counts={TissueClass(c): int(n) for c, n in enumerate(counts)})


def map_bands(
    fn: Callable[..., np.ndarray], *masks: LabelMask, tile_rows: int | None = None
) -> LabelMask:
    """
    Combine equally shaped masks band by band.
    :param fn: Receives one band per mask and returns the output band.
    :param masks: Input masks, at least one.
    :return: The encoded result, carrying the first mask's pixel spacing.
    :raises: ShapeMismatch if the masks differ in shape.
    """
    first = masks[0]
    for other in masks[1:]:
        if not first.same_shape(other):
            raise ShapeMismatch(f"mask shapes differ: {first.shape} vs {other.shape}")
    rows = _tile_rows(tile_rows)

    def bands() -> Iterator[np.ndarray]:
        for parts in zip(*(mask.iter_bands(rows) for mask in masks)):
            yield fn(*(band for _, band in parts))

    return LabelMask.from_bands(bands(), first.width, first.pixel_spacing)


def mask_and(a: LabelMask, keep: ClassPredicate) -> LabelMask:
    """
    Turn every pixel failing ``keep`` into Background.
    :param a: Source mask.
    :param keep: A class predicate, a collection of classes to keep, or a
        mask whose non-Background pixels are kept.
    :return: The masked, canonical mask.
    :raises: ShapeMismatch when ``keep`` is a mask of another shape.
    """
    if isinstance(keep, LabelMask):
        if not a.same_shape(keep):
            raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {keep.shape}")
        return map_bands(lambda x, y: np.where(y != 0, x, 0).astype(np.uint8), a, keep)
    lut = _predicate_table(keep)
    values = np.where(lut[a.values], a.values, 0).astype(np.uint8)
    values, lengths, offsets = canonicalize(values, a.lengths, a.row_offsets)
    return LabelMask(a.width, a.height, a.pixel_spacing, values, lengths, offsets)


def _predicate_table(keep: ClassPredicate) -> np.ndarray:
    if callable(keep):
        return np.array([bool(keep(TissueClass(c))) for c in range(_N_CLASSES)])
    table = np.zeros(_N_CLASSES, dtype=bool)
    for c in keep:
        table[int(c)] = True
    return table


# Connected components.
#
# Each band gets one int32 image of provisional ids. Glands (touching
# componentized pixels of any class) are labeled in a single pass; in
# per-class mode only the glands holding several classes are split again,
# inside their bounding boxes. Ids touching across a band edge are joined
# afterwards with a sparse-graph components pass.


def _label_rows(m: LabelMask, tile_rows: int | None) -> int:
    return max(1, min(_tile_rows(tile_rows), LABEL_BAND_PIXELS // m.width))


def _class_histogram(labels: np.ndarray, band: np.ndarray, n: int) -> np.ndarray:
    """Per-label class counts, shape ``(n + 1, classes)``; row 0 is unlabeled."""
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    keys = flat[idx].astype(np.int64) * _N_CLASSES + band.ravel()[idx]
    return np.bincount(keys, minlength=(n + 1) * _N_CLASSES).reshape(n + 1, _N_CLASSES)


def _label_band(
    band: np.ndarray, structure: np.ndarray, by_class: bool
) -> Tuple[np.ndarray, int]:
    glands, n = ndimage.label(_COMPONENT_TABLE[band], structure=structure)
    if not by_class or n == 0:
        return glands, n
    hist = _class_histogram(glands, band, n)
    kinds = np.count_nonzero(hist[1:], axis=1)
    mixed = np.flatnonzero(kinds > 1) + 1
    if len(mixed) == 0:
        return glands, n

    # a same-class component never leaves its gland
    relabel = np.zeros(n + 1, dtype=np.int32)
    pure = np.flatnonzero(kinds == 1) + 1
    relabel[pure] = np.arange(1, len(pure) + 1, dtype=np.int32)
    labels = relabel[glands]
    count = len(pure)
    boxes = ndimage.find_objects(glands)
    for g in mixed:
        box = boxes[g - 1]
        inside = glands[box] == g
        sub_band = band[box]
        target = labels[box]
        for c in np.flatnonzero(hist[g]):
            part, k = ndimage.label(inside & (sub_band == c), structure=structure)
            hit = part > 0
            target[hit] = part[hit] + count
            count += k
    return labels, count


def _iter_labels(
    m: LabelMask, connectivity: int, by_class: bool, tile_rows: int | None
) -> Iterator[Tuple[int, np.ndarray, np.ndarray, int, int]]:
    """Yield ``(first_row, band, labels, id_offset, n)`` for every band."""
    structure = _structure(connectivity)
    offset = 0
    for y0, band in m.iter_bands(_label_rows(m, tile_rows)):
        labels, n = _label_band(band, structure, by_class)
        yield y0, band, labels, offset, n
        offset += n


class _ComponentScan:
    """Component table plus the provisional-id to component-id map behind it."""

    def __init__(self, components: List[Component], prov_to_final: np.ndarray) -> None:
        self.components = components
        self.prov_to_final = prov_to_final


def _band_stats(
    labels: np.ndarray, band: np.ndarray, n: int, y0: int, width: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Class histogram, bounding box and first pixel of every label of a band."""
    hist = _class_histogram(labels, band, n)[1:]
    box = np.array(
        [(sx.start, sy.start, sx.stop - 1, sy.stop - 1) for sy, sx in ndimage.find_objects(labels)],
        dtype=np.int64,
    ).reshape(n, 4)

    # the first pixel in row-major order lies on the label's top row
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    ids = flat[idx].astype(np.int64) - 1
    on_top = idx // width == box[ids, 1]
    first = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, ids[on_top], idx[on_top])

    box[:, [1, 3]] += y0
    return hist, box, first + y0 * width


def _scan(
    m: LabelMask, connectivity: int, by_class: bool, tile_rows: int | None
) -> _ComponentScan:
    histograms: List[np.ndarray] = []
    boxes: List[np.ndarray] = []
    firsts: List[np.ndarray] = []
    edges_a: List[np.ndarray] = []
    edges_b: List[np.ndarray] = []
    previous: Tuple[np.ndarray, np.ndarray] | None = None
    total = 0

    for y0, band, labels, offset, n in _iter_labels(m, connectivity, by_class, tile_rows):
        total = offset + n
        top = np.where(labels[0] > 0, labels[0].astype(np.int64) + offset, 0)
        if previous is not None:
            _link_rows(previous, (top, band[0]), connectivity, by_class, edges_a, edges_b)
        bottom = np.where(labels[-1] > 0, labels[-1].astype(np.int64) + offset, 0)
        previous = (bottom, band[-1].copy())
        if n == 0:
            continue
        hist, box, first = _band_stats(labels, band, n, y0, m.width)
        histograms.append(hist)
        boxes.append(box)
        firsts.append(first)

    if total == 0:
        return _ComponentScan([], np.zeros(1, dtype=np.int64))

    a = np.concatenate(edges_a) if edges_a else np.zeros(0, dtype=np.int64)
    b = np.concatenate(edges_b) if edges_b else np.zeros(0, dtype=np.int64)
    graph = sparse.coo_matrix(
        (np.ones(len(a), dtype=np.int8), (a, b)), shape=(total + 1, total + 1)
    )
    _, roots = graph_components(graph, directed=False)
    roots, inverse = np.unique(roots[1:], return_inverse=True)
    k = len(roots)

    hist = np.zeros((k, _N_CLASSES), dtype=np.int64)
    np.add.at(hist, inverse, np.concatenate(histograms))
    first_pixel = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first_pixel, inverse, np.concatenate(firsts))
    box_all = np.concatenate(boxes)
    lo = np.full((k, 2), np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full((k, 2), -1, dtype=np.int64)
    np.minimum.at(lo, inverse, box_all[:, :2])
    np.maximum.at(hi, inverse, box_all[:, 2:])

    # ids are dense from 1 in row-major order of each component's first pixel
    order = np.argsort(first_pixel, kind="stable")
    final_id = np.empty(k, dtype=np.int64)
    final_id[order] = np.arange(1, k + 1)
    prov_to_final = np.concatenate(([0], final_id[inverse]))

    components = []
    for j in order:
        row = hist[j]
        present = np.flatnonzero(row)
        # built from counted pixels, so the component validators cannot fail
        components.append(
            Component.model_construct(
                id=int(final_id[j]),
                # argmax picks the lowest code among equally frequent classes
                class_=TissueClass(int(np.argmax(row))),
                pixel_count=int(row.sum()),
                bounding_box=(int(lo[j, 0]), int(lo[j, 1]), int(hi[j, 0]), int(hi[j, 1])),
                class_counts={TissueClass(int(c)): int(row[c]) for c in present},
            )
        )
    logger.debug(f"Labeled {len(components)} components from {total} band-local labels")
    return _ComponentScan(components, prov_to_final)


def _link_rows(
    above: Tuple[np.ndarray, np.ndarray],
    below: Tuple[np.ndarray, np.ndarray],
    connectivity: int,
    by_class: bool,
    edges_a: List[np.ndarray],
    edges_b: List[np.ndarray],
) -> None:
    (ids_above, classes_above), (ids_below, classes_below) = above, below
    shifts = [(slice(None), slice(None))]
    if connectivity == 8:
        shifts += [(slice(None, -1), slice(1, None)), (slice(1, None), slice(None, -1))]
    for sa, sb in shifts:
        a, b = ids_above[sa], ids_below[sb]
        touching = (a > 0) & (b > 0)
        if by_class:
            touching &= classes_above[sa] == classes_below[sb]
        edges_a.append(a[touching])
        edges_b.append(b[touching])


def connected_components(
    m: LabelMask,
    connectivity: int = 4,
    by_class: bool = True,
    tile_rows: int | None = None,
) -> List[Component]:
    """
    Find the connected components of epithelial and hard-negative pixels.
    :param m: The mask to label.
    :param connectivity: 4 or 8.
    :param by_class: True partitions per class; False joins touching pixels
        of any componentized class into one gland carrying its majority class.
    :param tile_rows: Band height; the result does not depend on it.
    :return: Components with ids dense from 1, ordered by their first pixel in row-major order.
    """
    return _scan(m, connectivity, by_class, tile_rows).components


def component_labels(
    m: LabelMask,
    connectivity: int = 4,
    by_class: bool = True,
    tile_rows: int | None = None,
) -> np.ndarray:
    """
    Dense component-id image (0 where no component) for desk-scale masks.
    Ids match the ones ``connected_components`` returns for the same arguments.
    """
    scan = _scan(m, connectivity, by_class, tile_rows)
    out = np.zeros(m.shape, dtype=np.int64)
    for y0, band, labels, offset, n in _iter_labels(m, connectivity, by_class, tile_rows):
        if n == 0:
            continue
        selected = labels > 0
        rows = out[y0 : y0 + band.shape[0]]
        rows[selected] = scan.prov_to_final[labels[selected].astype(np.int64) + offset]
    return out


def majority_vote(components: List[Component]) -> Dict[int, TissueClass]:
    """
    Assign each component its modal class; ties go to the lower class code
    (the lower Gleason grade).
    """
    assignment = {}
    for component in components:
        best = max(component.class_counts.items(), key=lambda item: (item[1], -int(item[0])))
        assignment[component.id] = best[0]
    return assignment


def relabel_components(
    m: LabelMask,
    assignment: Mapping[int, TissueClass],
    connectivity: int = 4,
    by_class: bool = True,
    tile_rows: int | None = None,
) -> LabelMask:
    """
    Paint every pixel of component ``i`` with ``assignment[i]``.
    :param m: Source mask.
    :param assignment: Component id to class, covering every component id.
    :param connectivity: Connectivity the ids were computed with.
    :param by_class: Component mode the ids were computed with.
    :return: The relabeled mask; pixels outside components are unchanged.
    :raises: MissingAssignment for the first uncovered component id.
    """
    scan = _scan(m, connectivity, by_class, tile_rows)
    table = np.zeros(len(scan.components) + 1, dtype=np.uint8)
    for component in scan.components:
        if component.id not in assignment:
            raise MissingAssignment(component.id)
        table[component.id] = int(assignment[component.id])
    prov_table = table[scan.prov_to_final]

    def bands() -> Iterator[np.ndarray]:
        for _, band, labels, offset, n in _iter_labels(m, connectivity, by_class, tile_rows):
            out = band.copy()
            if n:
                selected = labels > 0
                out[selected] = prov_table[labels[selected].astype(np.int64) + offset]
            yield out

    return LabelMask.from_bands(bands(), m.width, m.pixel_spacing)
