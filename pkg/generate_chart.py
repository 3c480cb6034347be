"""
Static SVG charts for corpus reports
"""

import logging
import math
from html import escape
from typing import Dict, Optional, Sequence

from models import OpcodeDistribution

logger = logging.getLogger(__name__)

FONT = 'font-family="DejaVu Sans,Verdana,Geneva,sans-serif"'
PALETTE = ['#005ce6', '#ff9933', '#00b300', '#cc00cc', '#ff4d4d', '#c266ff', '#595959', '#00a3a3']


def _num(value: float) -> str:
    return f'{value:.2f}'


class Chart:
    """Shared header, title and save logic; subclasses emit the body in compile()"""

    def __init__(self, title: str, width: int, height: int):
        self.title = title
        self.width = width
        self.height = height
        self.code = ''

    def header(self) -> str:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
                f'<text x="{self.width // 2}" y="20" text-anchor="middle" {FONT} font-size="14" '
                f'fill="#333">{escape(self.title)}</text>\n')

    def body(self) -> str:
        raise NotImplementedError

    def compile(self) -> str:
        self.code = self.header() + self.body() + '</svg>\n'
        return self.code

    def save(self, path: str) -> None:
        self.compile()
        with open(path, 'w', encoding='utf-8', newline='\n') as arq:
            arq.write(self.code)
        logger.debug(f'Wrote chart {path}')

    def legend(self, names: Sequence[str], x: int, y: int) -> str:
        code = ''
        for i, name in enumerate(names):
            color = PALETTE[i % len(PALETTE)]
            ypos = y + i * 16
            code += (f'<rect x="{x}" y="{ypos}" width="10" height="10" fill="{color}"/>\n'
                     f'<text x="{x + 14}" y="{ypos + 9}" {FONT} font-size="10" fill="#333">{escape(name)}</text>\n')
        return code


class BarChart(Chart):
    """Grouped vertical bars: one group per label, one bar per series"""

    def __init__(self, title: str, labels: Sequence[str], series: Dict[str, Sequence[float]],
                 value_format: str = '{:.1%}', log_scale: bool = False):
        self.labels = list(labels)
        self.series = {name: list(values) for name, values in sorted(series.items())}
        self.value_format = value_format
        self.log_scale = log_scale
        self.margin_left = 50
        self.margin_top = 40
        self.chart_height = 220
        self.group_width = max(30, 14 * max(1, len(self.series)) + 10)
        width = self.margin_left + self.group_width * max(1, len(self.labels)) + 140
        super().__init__(title, width, self.margin_top + self.chart_height + 90)

    def scaled(self, value: float) -> float:
        return math.log10(1 + value) if self.log_scale else value

    def body(self) -> str:
        top = max((self.scaled(v) for values in self.series.values() for v in values), default=0.0)
        top = top or 1.0
        base = self.margin_top + self.chart_height
        code = (f'<line x1="{self.margin_left}" y1="{base}" x2="{self.width - 140}" y2="{base}" '
                f'stroke="#333" stroke-width="1"/>\n')
        if self.log_scale:
            code += (f'<text x="10" y="{self.margin_top}" {FONT} font-size="9" fill="#666">log scale</text>\n')

        bar_width = (self.group_width - 10) / max(1, len(self.series))
        for g, label in enumerate(self.labels):
            xgroup = self.margin_left + g * self.group_width + 5
            for s, (name, values) in enumerate(self.series.items()):
                value = values[g] if g < len(values) else 0
                height = self.scaled(value) / top * self.chart_height
                x = xgroup + s * bar_width
                code += (f'<rect x="{_num(x)}" y="{_num(base - height)}" width="{_num(bar_width - 1)}" '
                         f'height="{_num(height)}" fill="{PALETTE[s % len(PALETTE)]}">'
                         f'<title>{escape(name)} {escape(label)}: {self.value_format.format(value)}</title></rect>\n')
            xtext = xgroup + (self.group_width - 10) / 2
            code += (f'<text x="{_num(xtext)}" y="{base + 12}" text-anchor="end" {FONT} font-size="9" fill="#333" '
                     f'transform="rotate(-45 {_num(xtext)} {base + 12})">{escape(label)}</text>\n')
        code += self.legend(list(self.series), self.width - 130, self.margin_top)
        return code


class HeatmapChart(Chart):
    """Grid of [0,1] cells; absent cells are drawn grey"""

    def __init__(self, title: str, rows: Sequence[str], columns: Sequence[str],
                 cells: Sequence[Sequence[Optional[float]]], cell_size: int = 48):
        self.rows = list(rows)
        self.columns = list(columns)
        self.cells = [list(row) for row in cells]
        self.cell_size = cell_size
        self.margin_left = 20 + 7 * max((len(r) for r in self.rows), default=4)
        self.margin_top = 100
        super().__init__(title, self.margin_left + cell_size * max(1, len(self.columns)) + 20,
                         self.margin_top + cell_size * max(1, len(self.rows)) + 20)

    @staticmethod
    def color(value: float) -> str:
        # White to blue.
        level = max(0.0, min(1.0, value))
        red = round(255 - 255 * level)
        green = round(255 - 163 * level)
        return f'#{red:02x}{green:02x}e6' if level else '#ffffff'

    def body(self) -> str:
        code = ''
        size = self.cell_size
        for c, column in enumerate(self.columns):
            x = self.margin_left + c * size + size // 2
            code += (f'<text x="{x}" y="{self.margin_top - 6}" {FONT} font-size="10" fill="#333" '
                     f'transform="rotate(-45 {x} {self.margin_top - 6})">{escape(column)}</text>\n')
        for r, row in enumerate(self.rows):
            y = self.margin_top + r * size
            code += (f'<text x="{self.margin_left - 6}" y="{y + size // 2 + 4}" text-anchor="end" {FONT} '
                     f'font-size="10" fill="#333">{escape(row)}</text>\n')
            for c in range(len(self.columns)):
                x = self.margin_left + c * size
                value = self.cells[r][c] if c < len(self.cells[r]) else None
                if value is None:
                    code += f'<rect x="{x}" y="{y}" width="{size}" height="{size}" fill="#dddddd" stroke="#fff"/>\n'
                    continue
                ink = '#fff' if value > 0.6 else '#010101'
                code += (f'<rect x="{x}" y="{y}" width="{size}" height="{size}" fill="{self.color(value)}" '
                         f'stroke="#fff"/>\n'
                         f'<text x="{x + size // 2}" y="{y + size // 2 + 4}" text-anchor="middle" {FONT} '
                         f'font-size="10" fill="{ink}">{value:.2f}</text>\n')
        return code


class HistogramChart(BarChart):
    """Per-language bin counts on a log count axis"""

    def __init__(self, title: str, edges: Sequence[float], counts: Dict[str, Sequence[int]]):
        labels = [f'[{edges[i]:g},{edges[i + 1]:g})' for i in range(len(edges) - 1)]
        super().__init__(title, labels, counts, value_format='{}', log_scale=True)


def opcode_chart(distribution: OpcodeDistribution, title: str = "Opcode distribution") -> BarChart:
    """Share of each language's instructions for every opcode in the aggregate top-k"""
    names = [name for name, _ in distribution.aggregate.top]
    series = {}
    for language, table in distribution.per_language.items():
        counts = {name: count for name, count in table.top}
        total = table.total or 1
        series[language] = [counts.get(name, 0) / total for name in names]
    return BarChart(title, names, series)
