"""
Standalone SVG plots: a shaded confusion grid and ROC curves with a
bootstrap band. Coordinates are printed with fixed precision so the files
are byte-stable.
"""
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

from services.stats.schemas import BootstrapRoc, ConfusionMatrix, RocCurve

_FONT = 'font-family="sans-serif" font-size="11"'


def _num(v: float) -> str:
    return f"{v:.2f}"


def _document(width: int, height: int, body: List[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    background = f'<rect width="{width}" height="{height}" fill="white"/>'
    return "\n".join([head, background] + body + ["</svg>", ""])


def confusion_svg(matrix: ConfusionMatrix, title: str) -> str:
    """Rows are the reference, columns the prediction; darker cells hold more cases."""
    counts = matrix.as_array()
    labels = matrix.scale.categories
    k = len(labels)
    cell, left, top = 44, 70, 50
    size = left + k * cell + 20
    peak = max(int(counts.max()), 1)
    body = [f'<text x="{size // 2}" y="20" text-anchor="middle" {_FONT}>{escape(title)}</text>']
    for i in range(k):
        for j in range(k):
            n = int(counts[i, j])
            shade = int(round(255 - 200 * n / peak))
            x, y = left + j * cell, top + i * cell
            text_fill = "white" if shade < 128 else "black"
            body.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)" stroke="#999"/>'
            )
            body.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle" '
                f'fill="{text_fill}" {_FONT}>{n}</text>'
            )
        body.append(
            f'<text x="{left - 6}" y="{top + i * cell + cell // 2 + 4}" text-anchor="end" '
            f"{_FONT}>{escape(labels[i])}</text>"
        )
        body.append(
            f'<text x="{left + i * cell + cell // 2}" y="{top - 8}" text-anchor="middle" '
            f"{_FONT}>{escape(labels[i])}</text>"
        )
    body.append(
        f'<text x="12" y="{top + k * cell // 2}" transform="rotate(-90 12 {top + k * cell // 2})" '
        f'text-anchor="middle" {_FONT}>reference</text>'
    )
    body.append(
        f'<text x="{left + k * cell // 2}" y="{top + k * cell + 16}" text-anchor="middle" '
        f"{_FONT}>prediction</text>"
    )
    return _document(size, top + k * cell + 30, body)


def roc_svg(
    curve: RocCurve,
    title: str,
    band: Optional[BootstrapRoc] = None,
    readers: Sequence[Tuple[str, float, float]] = (),
) -> str:
    """
    ROC plot of sensitivity against false-positive rate.
    :param readers: (name, sensitivity, specificity) operating points drawn as dots.
    """
    side, margin = 320, 50
    width = height = side + 2 * margin

    def xy(fpr: float, tpr: float) -> str:
        return f"{_num(margin + fpr * side)},{_num(margin + (1.0 - tpr) * side)}"

    body = [
        f'<text x="{width // 2}" y="24" text-anchor="middle" {_FONT}>{escape(title)}</text>',
        f'<rect x="{margin}" y="{margin}" width="{side}" height="{side}" '
        'fill="none" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin + side}" x2="{margin + side}" y2="{margin}" '
        'stroke="#bbb" stroke-dasharray="4,4"/>',
    ]
    for t in range(6):
        v = t / 5
        x, y = margin + v * side, margin + (1.0 - v) * side
        body.append(
            f'<text x="{_num(x)}" y="{margin + side + 16}" text-anchor="middle" '
            f"{_FONT}>{v:.1f}</text>"
        )
        body.append(
            f'<text x="{margin - 6}" y="{_num(y + 4)}" text-anchor="end" {_FONT}>{v:.1f}</text>'
        )
    if band is not None:
        upper = [xy(f, t) for f, t in zip(band.fpr_grid, band.tpr_upper)]
        lower = [xy(f, t) for f, t in zip(reversed(band.fpr_grid), reversed(band.tpr_lower))]
        body.append(f'<polygon points="{" ".join(upper + lower)}" fill="#9ecae1" opacity="0.5"/>')
    points: Iterable[str] = (
        xy(p.false_positive_rate, p.sensitivity) for p in reversed(curve.points)
    )
    body.append(
        f'<polyline points="{" ".join(points)}" fill="none" stroke="#08519c" '
        'stroke-width="2"/>'
    )
    for name, sensitivity, specificity in readers:
        cx, cy = xy(1.0 - specificity, sensitivity).split(",")
        body.append(
            f'<circle cx="{cx}" cy="{cy}" r="3" fill="#e6550d">'
            f"<title>{escape(name)}</title></circle>"
        )
    body.append(
        f'<text x="{margin + side - 6}" y="{margin + side - 8}" text-anchor="end" {_FONT}>'
        f"AUC {curve.auc:.3f}</text>"
    )
    body.append(
        f'<text x="{width // 2}" y="{height - 8}" text-anchor="middle" '
        f"{_FONT}>1 - specificity</text>"
    )
    body.append(
        f'<text x="14" y="{height // 2}" transform="rotate(-90 14 {height // 2})" '
        f'text-anchor="middle" {_FONT}>sensitivity</text>'
    )
    return _document(width, height, body)


def write_svg(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
