"""Regenerate the example maps shipped in src/patrolroute/data/."""

from pathlib import Path

from patrolroute.config import SyntheticSpec
from patrolroute.terrain import generate_synthetic_map, save_map, skeletonize

DATA = Path(__file__).resolve().parents[1] / "src" / "patrolroute" / "data"

BUNDLED = {
    "city20.json": (SyntheticSpec(20, 20, hotspots=3, padding=1), 3),
    "city10.json": (SyntheticSpec(10, 10, hotspots=1, decay_radius=3, padding=1), 6),
}

if __name__ == "__main__":
    for name, (spec, seed) in BUNDLED.items():
        grid = generate_synthetic_map(spec, seed)
        save_map(grid, DATA / name)
        g = skeletonize(grid)
        print(f"{name}: {g.num_nodes} nodes, {g.num_edges} edges, {len(g.monitored)} monitored")
