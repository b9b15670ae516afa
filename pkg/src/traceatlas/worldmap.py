"""Render aggregated country links onto a world-map raster as SVG overlays.

Country plot positions are pre-projected pixels on a reference raster
(4000x2600 equirectangular by default); the SVG references the base
raster instead of embedding it, so outputs stay small and byte-stable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import CountryLink

REFERENCE_RASTER = (4000, 2600)

# Pixel position of Mauritius on the reference raster; kept fixed so maps
# line up with the coordinate table that motivated the raster size.
MAURITIUS_PIN = (2611.0, 1569.0)

DEFAULT_BASE_IMAGE = "world.png"


class MissingCoordinateError(KeyError):
    def __init__(self, country: str):
        super().__init__(f"no map coordinates for country {country!r}")
        self.country = country


@dataclass(frozen=True)
class MapCoordinateTable:
    width: int
    height: int
    coords: Mapping[str, tuple[float, float]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", dict(self.coords))
        for country, (x, y) in self.coords.items():
            if not (0 <= x <= self.width and 0 <= y <= self.height):
                raise ValueError(f"{country} plotted off-raster at ({x}, {y})")

    def position(self, country: str) -> tuple[float, float]:
        try:
            return self.coords[country]
        except KeyError:
            raise MissingCoordinateError(country) from None


def derive_map_coords(centroids: Mapping[str, tuple[float, float]],
                      width: int = REFERENCE_RASTER[0],
                      height: int = REFERENCE_RASTER[1],
                      pins: Mapping[str, tuple[float, float]] | None = None) -> MapCoordinateTable:
    """Project country centroids (lat, lon) onto raster pixels.

    Equirectangular: x grows east from -180, y grows south from +90. Pins
    override individual countries (Mauritius by default, scaled if the
    raster is not the reference size).
    """
    if pins is None:
        sx = width / REFERENCE_RASTER[0]
        sy = height / REFERENCE_RASTER[1]
        pins = {"MU": (MAURITIUS_PIN[0] * sx, MAURITIUS_PIN[1] * sy)}
    coords = {}
    for country, (lat, lon) in centroids.items():
        x = (lon + 180.0) / 360.0 * width
        y = (90.0 - lat) / 180.0 * height
        coords[country] = (round(x, 1), round(y, 1))
    for country, xy in pins.items():
        if country in coords:
            coords[country] = xy
    return MapCoordinateTable(width=width, height=height, coords=coords)


def load_map_coords(path) -> MapCoordinateTable:
    """CSV `country,mapx,mapy`; an optional `# raster <w> <h>` comment
    declares the raster size (reference size otherwise)."""
    width, height = REFERENCE_RASTER
    coords: dict[str, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].startswith("#"):
                parts = row[0].lstrip("#").split()
                if parts[:1] == ["raster"]:
                    width, height = int(parts[1]), int(parts[2])
                continue
            if row[0] == "country":
                continue
            coords[row[0].strip()] = (float(row[1]), float(row[2]))
    return MapCoordinateTable(width=width, height=height, coords=coords)


def write_map_coords(table: MapCoordinateTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# raster {table.width} {table.height}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["country", "mapx", "mapy"])
        for country in sorted(table.coords):
            x, y = table.coords[country]
            writer.writerow([country, repr(float(x)), repr(float(y))])


def _stroke_width(count: int) -> float:
    return 1.0 + math.log10(count)


def render_links(links: Iterable[CountryLink], coords: MapCoordinateTable,
                 base_image: str = DEFAULT_BASE_IMAGE) -> str:
    """All-links world view: one straight segment per directed link,
    stroke width growing with log(count). Deterministic byte output."""
    return _render(sorted(links, key=lambda l: (l.from_country, l.to_country)),
                   coords, base_image)


def render_country_view(links: Iterable[CountryLink], coords: MapCoordinateTable,
                        focus: str, base_image: str = DEFAULT_BASE_IMAGE) -> str:
    """Filtered view: only links with `focus` as an endpoint, i.e. the
    next country-hops of one country."""
    coords.position(focus)  # fail fast if the focus cannot be plotted
    kept = [l for l in links if focus in (l.from_country, l.to_country)]
    return _render(sorted(kept, key=lambda l: (l.from_country, l.to_country)),
                   coords, base_image)


def _render(links: list[CountryLink], coords: MapCoordinateTable, base_image: str) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{coords.width}" height="{coords.height}" '
        f'viewBox="0 0 {coords.width} {coords.height}">',
        f'  <image xlink:href="{base_image}" x="0" y="0" '
        f'width="{coords.width}" height="{coords.height}"/>',
    ]
    for link in links:
        x1, y1 = coords.position(link.from_country)
        x2, y2 = coords.position(link.to_country)
        lines.append(
            f'  <line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" '
            f'stroke="#c0392b" stroke-opacity="0.55" '
            f'stroke-width="{_stroke_width(link.count):.3f}">'
            f'<title>{link.from_country}-&gt;{link.to_country} x{link.count}</title></line>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def segment_count(svg: str) -> int:
    """Number of link segments in a rendered document (test/report helper)."""
    return svg.count("<line ")
