"""Command-line driver: ``viewshed --algorithm ... --input ... --viewpoint r,c``."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockstore import BlockStore, IOStats, export_stats_csv
from .centrifugal import centrifugal_sweep, export_slots_csv
from .geometry import LOSModel
from .grid import (
    Grid,
    GridFormatError,
    Viewpoint,
    Visibility,
    VisibilityGrid,
    export_pgm,
    load_grid,
    store_visibility,
)
from .horizon_sweep import vis_dac, vis_iter
from .oracles import r3_viewshed, vk_viewshed
from .radial import InvariantError, sweep_banded, sweep_sectored

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_INVARIANT = 3
EXIT_DIFFERENT = 4  # --compare found disagreements beyond tolerance

CELL_ALGORITHMS = ("vk-oracle", "radial-banded", "radial-sectored", "centrifugal")
LINEAR_ALGORITHMS = ("r3", "vis-iter", "vis-dac")
ALGORITHMS = LINEAR_ALGORITHMS + CELL_ALGORITHMS
DEFAULT_MEMORY_BUDGET = 256 * 2**20
MAX_LISTED = 20


class ConfigError(Exception):
    """Invalid command-line configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise ConfigError(message)


@dataclass
class RunConfig:
    algorithm: str
    model: LOSModel | None
    viewpoint: Viewpoint
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    block_size: int | None = None
    cache_blocks: int | None = None
    strict_occlusion: bool = True
    record_visit_order: Path | None = None

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in CELL_ALGORITHMS and self.model is not None:
            raise ConfigError(f"--model does not apply to {self.algorithm}")
        if self.memory_budget <= 0:
            raise ConfigError("memory budget must be positive")
        if not self.strict_occlusion and self.algorithm != "r3":
            raise ConfigError("non-strict occlusion is only available for r3")
        if self.record_visit_order is not None and self.algorithm != "centrifugal":
            raise ConfigError("visit order recording needs the centrifugal algorithm")


@dataclass
class RunOutcome:
    visibility: VisibilityGrid
    runtime_ms: float
    input_io: IOStats | None = None
    output_io: IOStats | None = None
    final_horizon_vertices: int | None = None
    result: object = None


def run(grid: Grid, cfg: RunConfig) -> RunOutcome:
    """Run one algorithm on an in-memory grid."""
    cfg.validate()
    vp = cfg.viewpoint
    vp.validate(grid)
    store = out_store = None
    if cfg.block_size is not None:
        store = BlockStore(grid.values.reshape(-1).copy(), cfg.block_size, cfg.cache_blocks)
        out_store = BlockStore.empty(grid.size, cfg.block_size, cfg.cache_blocks, np.uint8)
    model = cfg.model or LOSModel.GRIDLINES
    budget = cfg.memory_budget
    final = None
    start = time.perf_counter()
    if cfg.algorithm == "r3":
        res = r3_viewshed(grid, vp, model, cfg.strict_occlusion)
        vis = res
    elif cfg.algorithm == "vk-oracle":
        res = vk_viewshed(grid, vp)
        vis = res
    elif cfg.algorithm == "radial-banded":
        res = sweep_banded(grid, vp, budget, store=store, output_store=out_store)
        vis = res.visibility
    elif cfg.algorithm == "radial-sectored":
        res = sweep_sectored(grid, vp, budget, store=store, output_store=out_store)
        vis = res.visibility
    elif cfg.algorithm == "centrifugal":
        res = centrifugal_sweep(grid, vp, budget, store=store, output_store=out_store,
                                record_visit_order=cfg.record_visit_order is not None)
        vis = res.visibility
    else:
        fn = vis_iter if cfg.algorithm == "vis-iter" else vis_dac
        res = fn(grid, vp, model, budget, store=store, output_store=out_store)
        vis = res.visibility
        sizes = [s for s in res.stats.cumulative_sizes if s >= 0]
        final = sizes[-1] if sizes else None
    elapsed = (time.perf_counter() - start) * 1000.0
    in_io = store.flushed_stats() if store is not None else None
    out_io = out_store.flushed_stats() if out_store is not None else None
    return RunOutcome(vis, elapsed, in_io, out_io, final, res)


def _parse_viewpoint(text: str) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"viewpoint must be 'row,col', got {text!r}") from None
    return r, c


def _parse_io(text: str) -> tuple[int, int]:
    try:
        b, m = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--simulate-io expects 'B,M', got {text!r}") from None
    if b <= 0 or m <= 0:
        raise ConfigError("block size and cache blocks must be positive")
    return b, m


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viewshed", description="Compute the viewshed of a grid point.")
    p.add_argument("--algorithm", choices=ALGORITHMS, help="algorithm to run")
    p.add_argument("--compare", help="comma-separated algorithms to run and diff; an item "
                   "may carry its own model as 'vis-iter:layers'")
    p.add_argument("--model", choices=[m.value for m in LOSModel],
                   help="terrain model for r3, vis-iter and vis-dac (default gridlines)")
    p.add_argument("--input", required=True, type=Path, help="grid file (.asc or .raw)")
    p.add_argument("--output", type=Path, help="visibility raster (.asc or .raw)")
    p.add_argument("--pgm", type=Path, help="visibility image")
    p.add_argument("--viewpoint", required=True, help="row,col")
    p.add_argument("--height-offset", type=float, default=0.0)
    p.add_argument("--memory-budget", type=int, default=DEFAULT_MEMORY_BUDGET,
                   help="bytes of working memory the algorithms may plan for")
    p.add_argument("--simulate-io", metavar="B,M",
                   help="route grid access through a block store of M blocks of B values")
    p.add_argument("--strict-occlusion", action=argparse.BooleanOptionalAction, default=True,
                   help="a crossing must be strictly higher to hide a point (r3 only can turn "
                   "this off)")
    p.add_argument("--record-visit-order", type=Path, metavar="CSV",
                   help="centrifugal only: write the visiting order as row,col lines")
    p.add_argument("--horizon-stats", type=Path, metavar="CSV", help="per-layer horizon sizes")
    p.add_argument("--io-stats", type=Path, metavar="CSV", help="block store counters")
    p.add_argument("--slots-csv", type=Path, metavar="CSV",
                   help="centrifugal only: final horizon array")
    p.add_argument("--tolerance", type=float, default=0.01,
                   help="allowed disagreement fraction for centrifugal in --compare")
    return p


def _config_for(args, algorithm: str, model: str | None) -> RunConfig:
    r, c = _parse_viewpoint(args.viewpoint)
    block = cache = None
    if args.simulate_io:
        block, cache = _parse_io(args.simulate_io)
    return RunConfig(algorithm, LOSModel(model) if model else None,
                     Viewpoint(r, c, args.height_offset), args.memory_budget, block, cache,
                     args.strict_occlusion, args.record_visit_order)


def _emit(**pairs) -> None:
    for k, v in pairs.items():
        if v is not None:
            print(f"{k}={v}")


def _write_outputs(args, cfg: RunConfig, out: RunOutcome) -> None:
    if args.output:
        store_visibility(out.visibility, args.output)
    if args.pgm:
        export_pgm(out.visibility, args.pgm)
    if args.io_stats and out.input_io is not None:
        export_stats_csv({"input": out.input_io, "output": out.output_io}, args.io_stats)
    res = out.result
    if args.horizon_stats and cfg.algorithm in ("vis-iter", "vis-dac"):
        res.stats.to_csv(args.horizon_stats)
    if cfg.algorithm == "centrifugal":
        if args.slots_csv:
            export_slots_csv(res.slots, args.slots_csv)
        if cfg.record_visit_order is not None:
            ncols = out.visibility.shape[1]
            with open(cfg.record_visit_order, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["row", "col"])
                w.writerows(zip(*np.divmod(res.visit_order, ncols)))


def _single(args, grid: Grid) -> int:
    cfg = _config_for(args, args.algorithm, args.model)
    out = run(grid, cfg)
    _write_outputs(args, cfg, out)
    _emit(algorithm=cfg.algorithm,
          model=(cfg.model or LOSModel.GRIDLINES).value if cfg.algorithm in LINEAR_ALGORITHMS
          else None,
          visible_count=out.visibility.count(Visibility.VISIBLE),
          runtime_ms=f"{out.runtime_ms:.1f}",
          block_loads=out.input_io.block_loads if out.input_io else None,
          output_block_loads=out.output_io.block_loads if out.output_io else None,
          final_horizon_vertices=out.final_horizon_vertices)
    return EXIT_OK


def _compare(args, grid: Grid) -> int:
    items = []
    for tok in args.compare.split(","):
        name, _, model = tok.strip().partition(":")
        if name in CELL_ALGORITHMS and (model or args.model):
            raise ConfigError(f"--model does not apply to {name}")
        if name in LINEAR_ALGORITHMS:
            model = model or args.model or LOSModel.GRIDLINES.value
        items.append((name, model or None))
    if len(items) < 2:
        raise ConfigError("--compare needs at least two algorithms")
    families = {name in CELL_ALGORITHMS for name, _ in items}
    if len(families) > 1:
        raise ConfigError("cannot compare cell-blocking and interpolated algorithms")
    outs = []
    for name, model in items:
        cfg = _config_for(args, name, model)
        cfg.record_visit_order = None
        outs.append(run(grid, cfg))
    labels = [f"{n}:{m}" if m else n for n, m in items]
    ok = True
    identical = True
    valid = int(np.count_nonzero(grid.nodata_mask() == 0))
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            va = outs[a].visibility.visible_mask()
            vb = outs[b].visibility.visible_mask()
            diff = va != vb
            count = int(diff.sum())
            identical &= count == 0
            ma, mb = items[a][1], items[b][1]
            if "centrifugal" in (items[a][0], items[b][0]):
                passed = count <= args.tolerance * valid
            elif ma != mb:
                # interpolating along every grid line can only hide more points
                fine = va if ma == LOSModel.GRIDLINES.value else vb
                coarse = vb if fine is va else va
                passed = not np.any(fine & ~coarse)
            else:
                passed = count == 0
            ok &= passed
            cells = ";".join(f"{i},{j}" for i, j in np.argwhere(diff)[:MAX_LISTED])
            _emit(pair=f"{labels[a]}|{labels[b]}", disagreements=count,
                  fraction=f"{count / valid if valid else 0.0:.6f}",
                  only_first=int(np.sum(va & ~vb)), only_second=int(np.sum(vb & ~va)),
                  within_tolerance=str(passed).lower(), cells=cells or None)
    for label, out in zip(labels, outs):
        _emit(**{f"visible_count[{label}]": out.visibility.count(Visibility.VISIBLE),
                 f"runtime_ms[{label}]": f"{out.runtime_ms:.1f}"})
    if args.output:
        store_visibility(outs[0].visibility, args.output)
    print("IDENTICAL" if identical else ("WITHIN_TOLERANCE" if ok else "DIFFERENT"))
    return EXIT_OK if ok else EXIT_DIFFERENT


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if (args.algorithm is None) == (args.compare is None):
            raise ConfigError("give exactly one of --algorithm and --compare")
        grid = load_grid(args.input)
        if args.compare:
            return _compare(args, grid)
        return _single(args, grid)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, GridFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
