"""The 107-region territorial scheme.

Large municipalities are kept as their own units, the remainder of each
province forms a "rest of province" unit, and the two autonomous cities
stand alone. Region ids are slugs of the names; provincial remainders get a
``-rest`` suffix.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from collections import Counter
from collections.abc import Iterable, Iterator
from pathlib import Path

import pandas as pd

from .data_io import write_csv
from .exceptions import DuplicateKeyError, SchemaError, UnknownRegionError
from .model import RegionEntry, RegionKind

_LOGGER = logging.getLogger(__name__)

MUNICIPALITIES: tuple[str, ...] = (
    "Alacant",
    "Alcalá de Henares",
    "Albacete",
    "Alcorcón",
    "Algeciras",
    "Almería",
    "Badalona",
    "Badajoz",
    "Barakaldo",
    "Barcelona",
    "Bilbao",
    "Burgos",
    "Cádiz",
    "Cartagena",
    "Castelló de la Plana",
    "Córdoba",
    "Coruña (A)",
    "Donostia - San Sebastián",
    "Elx",
    "Fuenlabrada",
    "Getafe",
    "Gijón",
    "Granada",
    "Hospitalet de Llobregat (L')",
    "Huelva",
    "Jaén",
    "Jerez de la Frontera",
    "León",
    "Leganés",
    "Lleida",
    "Logroño",
    "Madrid",
    "Málaga",
    "Mataró",
    "Móstoles",
    "Murcia",
    "Ourense",
    "Oviedo",
    "Palma",
    "Palmas de Gran Canaria (Las)",
    "Pamplona - Iruña",
    "Sabadell",
    "Salamanca",
    "San Cristóbal de La Laguna",
    "Santa Coloma de Gramenet",
    "Santa Cruz de Tenerife",
    "Santander",
    "Sevilla",
    "Tarragona",
    "Terrassa",
    "Valencia",
    "Valladolid",
    "Vigo",
    "Vitoria-Gasteiz",
    "Zaragoza",
)

PROVINCES: tuple[str, ...] = (
    "Albacete",
    "Alacant",
    "Almería",
    "Araba - Álava",
    "Asturias",
    "Ávila",
    "Badajoz",
    "Balears (Illes)",
    "Barcelona",
    "Bizkaia",
    "Burgos",
    "Cáceres",
    "Cádiz",
    "Cantabria",
    "Castelló",
    "Ciudad Real",
    "Córdoba",
    "Coruña (A)",
    "Cuenca",
    "Girona",
    "Gipuzkoa",
    "Granada",
    "Guadalajara",
    "Huelva",
    "Huesca",
    "Jaén",
    "León",
    "Lleida",
    "Lugo",
    "Madrid",
    "Málaga",
    "Murcia",
    "Navarra",
    "Ourense",
    "Palencia",
    "Palmas (Las)",
    "Pontevedra",
    "Rioja (La)",
    "Salamanca",
    "Santa Cruz de Tenerife",
    "Segovia",
    "Sevilla",
    "Soria",
    "Tarragona",
    "Teruel",
    "Toledo",
    "València",
    "Valladolid",
    "Zamora",
    "Zaragoza",
)

AUTONOMOUS_CITIES: tuple[str, ...] = ("Ceuta", "Melilla")

EXPECTED_COUNTS: dict[RegionKind, int] = {
    RegionKind.MUNICIPALITY: 55,
    RegionKind.REST_OF_PROVINCE: 50,
    RegionKind.AUTONOMOUS_CITY: 2,
}

REGISTRY_HEADER: tuple[str, ...] = ("region_id", "name", "kind")


def slugify(name: str) -> str:
    """ASCII, lower-case, hyphen-separated identifier for a region name."""
    ascii_name = (
        unicodedata.normalize("NFKD", name).encode("ascii", "ignore").decode("ascii")
    )
    return re.sub(r"[^a-z0-9]+", "-", ascii_name.lower()).strip("-")


class RegionRegistry:
    """Ordered, id-unique collection of territorial units."""

    def __init__(self, entries: Iterable[RegionEntry]) -> None:
        """Initialize the registry.

        Args:
            entries: Region entries; ids must be unique.

        Raises:
            DuplicateKeyError: If two entries share an id.
        """
        self.entries: tuple[RegionEntry, ...] = tuple(entries)
        counts = Counter(e.region_id for e in self.entries)
        duplicates = sorted(k for k, v in counts.items() if v > 1)
        if duplicates:
            raise DuplicateKeyError("region ids", duplicates)
        self._by_id = {e.region_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RegionEntry]:
        return iter(self.entries)

    def __contains__(self, region_id: object) -> bool:
        return region_id in self._by_id

    def __getitem__(self, region_id: str) -> RegionEntry:
        try:
            return self._by_id[region_id]
        except KeyError:
            raise UnknownRegionError([region_id]) from None

    @property
    def ids(self) -> tuple[str, ...]:
        """Region ids in registry order."""
        return tuple(e.region_id for e in self.entries)

    def counts(self) -> dict[RegionKind, int]:
        """Number of entries of each kind."""
        tally = Counter(e.kind for e in self.entries)
        return {kind: tally.get(kind, 0) for kind in RegionKind}

    def check_default_counts(self) -> None:
        """Raise unless the 55/50/2 composition holds."""
        counts = self.counts()
        if counts != EXPECTED_COUNTS:
            shown = {k.value: v for k, v in counts.items()}
            raise SchemaError(f"Registry composition {shown} is not 55/50/2")

    def validate_ids(self, region_ids: Iterable[str]) -> None:
        """Raise ``UnknownRegionError`` listing every id not in the registry."""
        unknown = {r for r in region_ids if r not in self._by_id}
        if unknown:
            raise UnknownRegionError(unknown)


def default_registry() -> RegionRegistry:
    """The bundled 107-region registry."""
    entries = [
        RegionEntry(slugify(name), name, RegionKind.MUNICIPALITY)
        for name in MUNICIPALITIES
    ]
    entries += [
        RegionEntry(f"{slugify(name)}-rest", name, RegionKind.REST_OF_PROVINCE)
        for name in PROVINCES
    ]
    entries += [
        RegionEntry(slugify(name), name, RegionKind.AUTONOMOUS_CITY)
        for name in AUTONOMOUS_CITIES
    ]
    registry = RegionRegistry(entries)
    registry.check_default_counts()
    return registry


def read_registry(path: str | Path, check_counts: bool = True) -> RegionRegistry:
    """Load a registry file with header ``region_id,name,kind``.

    Raises:
        SchemaError: On a wrong header, unknown kind or bad composition.
    """
    table = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if tuple(table.columns) != REGISTRY_HEADER:
        raise SchemaError(f"Expected header {','.join(REGISTRY_HEADER)}", line=1)
    known = {kind.value for kind in RegionKind}
    bad = table.index[~table["kind"].isin(known)]
    if len(bad):
        row = int(bad[0])
        message = f"Unknown region kind {table.at[row, 'kind']!r}"
        raise SchemaError(message, line=row + 2)
    registry = RegionRegistry(
        RegionEntry(rid, name, RegionKind(kind))
        for rid, name, kind in table.itertuples(index=False)
    )
    if check_counts:
        registry.check_default_counts()
    _LOGGER.info(f"Loaded {len(registry)} regions from {path}")
    return registry


def write_registry(registry: RegionRegistry, path: str | Path) -> None:
    """Write a registry file."""
    table = pd.DataFrame(
        [(e.region_id, e.name, e.kind.value) for e in registry],
        columns=list(REGISTRY_HEADER),
    )
    write_csv(table, path)
    _LOGGER.info(f"Wrote {len(registry)} regions to {path}")
