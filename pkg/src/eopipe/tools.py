"""Process descriptions and tool adapters.

A tool adapter receives a working directory whose inputs have already been
fetched, runs, and reports the files it produced. Adapters never touch the
network; reference resolution is the runner's job.
"""

from __future__ import annotations

import json
import os
import subprocess
from array import array
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

from . import kernels
from .raster import MEDIA_TYPE, GeometryMismatch, Raster, raster_read, raster_write


class ToolFailed(RuntimeError):
    pass


class BadThresholds(ValueError):
    pass


@dataclass(frozen=True)
class InputSlot:
    identifier: str
    media_type: str = MEDIA_TYPE
    min_occurs: int = 1
    max_occurs: int = 1

    def to_dict(self) -> dict:
        return {"identifier": self.identifier, "mediaType": self.media_type,
                "minOccurs": self.min_occurs, "maxOccurs": self.max_occurs}


@dataclass(frozen=True)
class OutputSlot:
    identifier: str
    media_type: str = MEDIA_TYPE

    def to_dict(self) -> dict:
        return {"identifier": self.identifier, "mediaType": self.media_type}


@dataclass(frozen=True)
class Parameter:
    name: str
    type: str
    default: Any = None

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type, "default": self.default}


@dataclass(frozen=True)
class ProcessDescription:
    process_id: str
    title: str
    input_slots: tuple[InputSlot, ...]
    output_slots: tuple[OutputSlot, ...]
    parameters: tuple[Parameter, ...] = ()

    def __post_init__(self) -> None:
        if not self.input_slots or not self.output_slots:
            raise ValueError(f"{self.process_id}: input and output slots must be non-empty")

    def slot(self, identifier: str) -> InputSlot | None:
        return next((s for s in self.input_slots if s.identifier == identifier), None)

    def to_dict(self) -> dict:
        return {
            "id": self.process_id,
            "title": self.title,
            "inputs": [s.to_dict() for s in self.input_slots],
            "outputs": [s.to_dict() for s in self.output_slots],
            "parameters": [p.to_dict() for p in self.parameters],
        }


class ToolAdapter(Protocol):
    description: ProcessDescription

    def run(self, workdir: Path, inputs: dict[str, list[Path]], parameters: dict[str, Any]) -> dict[str, Path]:
        """Run on fetched inputs; return output identifier -> produced file."""


# ---------------------------------------------------------------- band math


def tool_ndvi(red: Raster, nir: Raster) -> Raster:
    """(nir - red) / (nir + red) per cell; nodata where either band is nodata or the sum is 0."""
    if red.geometry() != nir.geometry():
        raise GeometryMismatch(f"red grid {red.geometry()} != nir grid {nir.geometry()}")
    nir_values = nir.values
    if nir.nodata != red.nodata:
        # kernel knows one sentinel; translate nir's to red's
        nir_values = array("d", (red.nodata if v == nir.nodata else v for v in nir.values))
    return red.with_values(kernels.ndvi(red.values, nir_values, red.nodata))


DEFAULT_THRESHOLDS = (0.0, 0.2, 0.5)


def tool_land_cover_classification(image: Raster, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> Raster:
    """Class codes 1 water, 2 soil, 3 grass, 4 forest by value thresholds."""
    t_water, t_soil, t_veg = (float(t) for t in thresholds)
    if not t_water < t_soil < t_veg:
        raise BadThresholds(f"thresholds must be strictly increasing, got {list(thresholds)}")
    return image.with_values(kernels.classify(image.values, image.nodata, t_water, t_soil, t_veg))


WATER_CLASS = 1.0


def tool_water_mask(land_cover: Raster) -> Raster:
    return land_cover.with_values(kernels.equal_mask(land_cover.values, land_cover.nodata, WATER_CLASS))


# ------------------------------------------------------------------ adapters


def _single(inputs: dict[str, list[Path]], slot: str) -> Raster:
    paths = inputs.get(slot) or []
    if len(paths) != 1:
        raise ToolFailed(f"slot {slot!r} needs exactly one raster, got {len(paths)}")
    try:
        return raster_read(paths[0].read_bytes())
    except ValueError as exc:
        raise ToolFailed(f"slot {slot!r}: {exc}") from exc


def _emit(workdir: Path, output: str, raster: Raster) -> dict[str, Path]:
    out_dir = workdir / "outputs"
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{output}.asc"
    path.write_bytes(raster_write(raster))
    return {output: path}


class NdviTool:
    description = ProcessDescription(
        "demo.ndvi",
        "Normalized difference vegetation index",
        (InputSlot("red"), InputSlot("nir")),
        (OutputSlot("ndvi"),),
    )

    def run(self, workdir, inputs, parameters):
        try:
            result = tool_ndvi(_single(inputs, "red"), _single(inputs, "nir"))
        except GeometryMismatch as exc:
            raise ToolFailed(str(exc)) from exc
        return _emit(workdir, "ndvi", result)


class LandCoverTool:
    description = ProcessDescription(
        "de.hsbo.wacodis.land_cover_classification",
        "Threshold land cover classification (1 water, 2 soil, 3 grass, 4 forest)",
        (InputSlot("opticalImage"),),
        (OutputSlot("landCover"),),
        (
            Parameter("t_water", "number", DEFAULT_THRESHOLDS[0]),
            Parameter("t_soil", "number", DEFAULT_THRESHOLDS[1]),
            Parameter("t_vegetation", "number", DEFAULT_THRESHOLDS[2]),
        ),
    )

    def run(self, workdir, inputs, parameters):
        thresholds = [parameters.get(p.name, p.default) for p in self.description.parameters]
        try:
            result = tool_land_cover_classification(_single(inputs, "opticalImage"), thresholds)
        except BadThresholds as exc:
            raise ToolFailed(str(exc)) from exc
        return _emit(workdir, "landCover", result)


class WaterMaskTool:
    description = ProcessDescription(
        "demo.water_mask",
        "Water mask (1 water, 0 other) derived from a land cover product",
        (InputSlot("landCover"),),
        (OutputSlot("waterMask"),),
    )

    def run(self, workdir, inputs, parameters):
        return _emit(workdir, "waterMask", tool_water_mask(_single(inputs, "landCover")))


@dataclass
class ExternalCommandTool:
    """Runs a configured executable in the working directory.

    The command sees ``inputs/<slot>_<n>.<ext>`` files and ``parameters.json``
    and must write ``outputs/<outputIdentifier>.asc`` for every output slot.
    ``{workdir}`` in command arguments is replaced by the working directory.
    """

    description: ProcessDescription
    command: list[str]
    timeout: float = 3600.0
    env: dict[str, str] = field(default_factory=dict)

    def run(self, workdir, inputs, parameters):
        (workdir / "parameters.json").write_text(json.dumps(parameters, sort_keys=True))
        (workdir / "outputs").mkdir(exist_ok=True)
        argv = [a.replace("{workdir}", str(workdir)) for a in self.command]
        try:
            proc = subprocess.run(
                argv, cwd=workdir, capture_output=True, text=True, timeout=self.timeout,
                env={**os.environ, **self.env, "EOPIPE_WORKDIR": str(workdir)},
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ToolFailed(f"{argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            raise ToolFailed(f"exit status {proc.returncode}: {proc.stderr.strip()[-500:]}")
        outputs = {}
        for slot in self.description.output_slots:
            path = workdir / "outputs" / f"{slot.identifier}.asc"
            if not path.is_file():
                raise ToolFailed(f"tool did not write output {slot.identifier!r}")
            outputs[slot.identifier] = path
        return outputs


def builtin_tools() -> list[ToolAdapter]:
    return [LandCoverTool(), NdviTool(), WaterMaskTool()]
