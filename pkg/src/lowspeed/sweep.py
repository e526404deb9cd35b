"""Penetration-rate studies: run a scenario grid, aggregate fleet metrics.

For each penetration level the scenario runs once per seed; the report
carries mean and standard deviation of the headline metrics per level.  A
run with collisions taints its level in the report instead of aborting the
sweep.
"""

import math
from dataclasses import dataclass, field, replace

from .scenario import Scenario
from .simulation import Simulation

REPORT_SCHEMA_VERSION = 1

REPORT_FIELDS = (
    "schema_version", "penetration", "seeds", "tainted",
    "throughput_mean", "throughput_std",
    "mean_speed_mean", "mean_speed_std",
    "fuel_g_per_km_mean", "fuel_g_per_km_std",
    "collisions_total", "ttc_lt_2s_exposure_mean",
    "full_system_occupancy_mean", "tor_expired_total",
)


@dataclass
class SweepPoint:
    penetration: float
    seeds: list
    metrics: list = field(default_factory=list)
    tainted: bool = False

    def _stats(self, getter):
        vals = [getter(m) for m in self.metrics]
        n = len(vals)
        mean = sum(vals) / n
        var = sum((v - mean) ** 2 for v in vals) / n
        return mean, math.sqrt(var)

    def row(self):
        thr = self._stats(lambda m: m.throughput)
        spd = self._stats(lambda m: m.mean_speed)
        fuel = self._stats(lambda m: m.fuel_g_per_km)
        ttc = self._stats(lambda m: m.ttc_lt_2s_exposure)
        occ = self._stats(lambda m: m.mode_occupancy.get("full_system", 0.0))
        return {
            "schema_version": str(REPORT_SCHEMA_VERSION),
            "penetration": f"{self.penetration:.3f}",
            "seeds": str(len(self.seeds)),
            "tainted": "1" if self.tainted else "0",
            "throughput_mean": f"{thr[0]:.3f}",
            "throughput_std": f"{thr[1]:.3f}",
            "mean_speed_mean": f"{spd[0]:.4f}",
            "mean_speed_std": f"{spd[1]:.4f}",
            "fuel_g_per_km_mean": f"{fuel[0]:.4f}",
            "fuel_g_per_km_std": f"{fuel[1]:.4f}",
            "collisions_total": str(sum(m.collisions for m in self.metrics)),
            "ttc_lt_2s_exposure_mean": f"{ttc[0]:.3f}",
            "full_system_occupancy_mean": f"{occ[0]:.3f}",
            "tor_expired_total": str(sum(m.tor_expired for m in self.metrics)),
        }


def sweep(scenario: Scenario, penetrations, seeds_per_point: int, progress=None):
    """Cross product of penetrations x seeds; returns the point list."""
    points = []
    for p in penetrations:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"penetration {p} outside [0, 1]")
        seeds = [scenario.seed + i for i in range(seeds_per_point)]
        point = SweepPoint(penetration=p, seeds=seeds)
        for seed in seeds:
            sc = replace(scenario, seed=seed,
                         traffic=replace(scenario.traffic, penetration=p))
            sim = Simulation(sc)
            metrics = sim.run()
            point.metrics.append(metrics)
            if metrics.collisions > 0:
                point.tainted = True
            if progress is not None:
                progress(p, seed, metrics)
        points.append(point)
    return points


def write_report(points, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPORT_FIELDS) + "\n")
        for pt in points:
            row = pt.row()
            fh.write(",".join(row[k] for k in REPORT_FIELDS) + "\n")


def summary(points) -> str:
    lines = ["penetration sweep:"]
    for pt in points:
        row = pt.row()
        taint = "  TAINTED (collisions!)" if pt.tainted else ""
        lines.append(
            f"  p={row['penetration']}: throughput {row['throughput_mean']} veh/h "
            f"(sd {row['throughput_std']}), mean speed {row['mean_speed_mean']} m/s, "
            f"fuel {row['fuel_g_per_km_mean']} g/km, "
            f"full-delegation {row['full_system_occupancy_mean']} s{taint}"
        )
    return "\n".join(lines)
