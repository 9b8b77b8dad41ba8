"""Pick monitoring stations from the bundled synthetic network.

Loads the 22-station synthetic file, rescales coordinates onto the unit
box, and runs a small discrete coordinate exchange for a 4-station dual
design, then reports which stations were chosen and in which cluster.
"""

from geodesign import LossSpec, coordinate_exchange_discrete, make_evaluator
from geodesign.config import parse_config
from geodesign.stations import bundled_stations_path

config_path = bundled_stations_path().replace("stations_synthetic.csv", "network_synthetic.cfg")
config = parse_config(config_path)
print(f"{len(config.stations)} stations, {sum(r.sampled for r in config.stations)} sampled; "
      f"unit-box scale 1:{1 / config.affine.scale:,.0f} metres")

spec = LossSpec(kind="dual", K=2, B=30, R=80, fit_restarts=1, fit_max_evals=1200)
evaluator = make_evaluator(config.problem, spec, K=2, root_seed=config.seed)
best, trace = coordinate_exchange_discrete(config.space, 4, evaluator, restarts=1, root_seed=config.seed, sweep_cap=2)

by_location = {(loc.x, loc.y): rec for rec, loc in zip(config.stations, config.space.candidates)}
print(f"\nchosen stations after {trace.total_evaluations} evaluations:")
for p in best.points:
    rec = by_location[(p.x, p.y)]
    print(f"  {rec.station_id}  cluster {rec.cluster}  ({rec.x_utm:,.0f}, {rec.y_utm:,.0f})")
