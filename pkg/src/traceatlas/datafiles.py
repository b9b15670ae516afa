"""Access to the data files shipped with the package: the default bogon
list, the country table (continent + centroid per code, including the
registry placeholders like "EU" and "US-CO"), and the derived map
coordinate table.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

from .worldmap import MapCoordinateTable, load_map_coords


def _data_file(name: str) -> Path:
    return Path(str(resources.files("traceatlas").joinpath("data").joinpath(name)))


def default_bogons_path() -> Path:
    return _data_file("bogons.txt")


def countries_csv_path() -> Path:
    return _data_file("countries.csv")


def map_coords_path() -> Path:
    return _data_file("map_coords.csv")


def load_countries(path=None) -> dict[str, tuple[str, float, float]]:
    """country code -> (continent, centroid lat, centroid lon)."""
    table: dict[str, tuple[str, float, float]] = {}
    with open(path or countries_csv_path(), "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "country":
                continue
            table[row[0].strip()] = (row[1].strip(), float(row[2]), float(row[3]))
    return table


def country_continents(path=None) -> dict[str, str]:
    return {code: continent for code, (continent, _, _) in load_countries(path).items()}


def country_centroids(path=None) -> dict[str, tuple[float, float]]:
    return {code: (lat, lon) for code, (_, lat, lon) in load_countries(path).items()}


def load_centroids(path) -> dict[str, tuple[float, float]]:
    """Centroid CSV in either shipped (`country,continent,lat,lon`) or
    bundle (`country,lat,lon`) shape, told apart by column count."""
    table: dict[str, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "country":
                continue
            if len(row) == 4:
                table[row[0].strip()] = (float(row[2]), float(row[3]))
            elif len(row) == 3:
                table[row[0].strip()] = (float(row[1]), float(row[2]))
            else:
                raise ValueError(f"unrecognized centroid row: {row}")
    return table


def default_map_coords() -> MapCoordinateTable:
    return load_map_coords(map_coords_path())
