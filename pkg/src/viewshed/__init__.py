"""Viewshed computation on elevation grids.

Exact references, rotating-ray sweeps over the cell-blocking model, a
centrifugal approximation and horizon-merging sweeps over interpolated
terrain, with block-I/O accounting for all of them.
"""

from __future__ import annotations

from .blockstore import BlockStore, IOStats, export_stats_csv
from .centrifugal import (
    CentrifugalResult,
    CentrifugalStats,
    DisagreementReport,
    centrifugal_sweep,
    disagreement_report,
    export_slots_csv,
    precedence_violations,
    slot_count,
    slot_span,
    visit_order,
)
from .geometry import LOSModel, azimuth_key, cell_span, elev_key, screen_t, tile_dist
from .grid import (
    Grid,
    GridFormatError,
    TerrainKind,
    TerrainSpec,
    Viewpoint,
    Visibility,
    VisibilityGrid,
    export_pgm,
    generate,
    load_grid,
    load_visibility,
    store_grid,
    store_visibility,
)
from .horizon import Horizon, merge, merge_all, upper_envelope
from .horizon_sweep import HorizonResult, HorizonStats, vis_dac, vis_iter
from .oracles import r3_point_visible, r3_viewshed, vk_point_visible, vk_viewshed
from .radial import (
    ActiveStructure,
    InvariantError,
    SweepResult,
    SweepStats,
    min_sector_capacity,
    sector_boundaries,
    sweep_banded,
    sweep_sectored,
)

import types as _types

__all__ = sorted(name for name, obj in globals().items()
                 if not name.startswith("_") and name != "annotations"
                 and not isinstance(obj, _types.ModuleType))
