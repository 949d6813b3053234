"""Generated scenario files shared by the parser tests and the acceptance suite."""

from __future__ import annotations

import random

VARIANTS = ("ID0", "ID1", "ID2", "ID3", "id2")
CLASSES = ("motorcycle", "wheeler4x8", "wheeler4x6", "van", "jeepney", "car", "bus", "bicycle")


def valid_corpus(n=50, seed=7):
    """``n`` valid scenario texts that exercise every section with varied layout."""
    rng = random.Random(seed)
    out = []
    for k in range(n):
        lines = [f"# generated scenario {k}", "[scenario]"]
        warmup = rng.choice([0, 60, 300, 450.5])
        lines.append(f"variant = {rng.choice(VARIANTS)}")
        lines.append(f"warmup = {warmup}")
        lines.append(f"duration={warmup + rng.choice([1, 600, 3300, 1234.25])}")
        if rng.random() < 0.7:
            lines.append(f"volume_multiplier = {rng.choice([0, 0.5, 1, 1.1, 2.0, 1.75])}")
        if rng.random() < 0.5:
            lines.append(f"seed = {rng.randrange(0, 2**64)}")
        if rng.random() < 0.5:
            lines.append(f"replications = {rng.randint(1, 30)}")
        if rng.random() < 0.3:
            lines.append(f"dt = {rng.choice([0.05, 0.1, 0.2, 1.0])}")
        if rng.random() < 0.3:
            lines.append("network = br")
        if rng.random() < 0.5:
            lines += ["", "[ghr]", f"r_plus = {rng.uniform(0.5, 2):.3f}", f"t_minus = {rng.choice([0, 1, 2])}"]
        if rng.random() < 0.5:
            lines += ["", "; thresholds", "[thresholds]",
                      f"horizon_factor = {rng.choice([3, 5, 6.5])}",
                      f"lc_lead_headway = {rng.choice([0.5, 1.0, 1.5])}",
                      f"critical_gap = {rng.choice([2.5, 3, 4])}",
                      f"stop_speed = {rng.choice([0.05, 0.1, 0.3])}"]
        if rng.random() < 0.5:
            c = rng.choice(CLASSES)
            lines += ["", "[classes]", f"{c}.length = {rng.uniform(1.0, 12.0):.2f}",
                      f"{c}.a_max = {rng.uniform(0.8, 3.5):.2f}"]
        if rng.random() < 0.5:
            lines += ["", "[demand]", f"route{rng.randint(1, 6)} = {rng.randint(0, 2000)}",
                      f"horizon = {rng.choice([3600, 7200, 5400.5])}"]
        out.append("\n".join(lines) + "\n")
    return out


# (name, text, expected diagnostic fragment)
INVALID_CORPUS = [
    ("negative_multiplier", "[scenario]\nvolume_multiplier = -1\n", "volume multiplier must be ≥ 0"),
    ("duration_below_warmup", "[scenario]\nduration = 100\nwarmup = 300\n", "duration must be > warmup"),
    ("zero_dt", "[scenario]\ndt = 0\n", "dt must be in (0, 1] s"),
    ("negative_seed", "[scenario]\nseed = -1\n", "seed must be a 64-bit unsigned integer"),
    ("seed_overflow", f"[scenario]\nseed = {2**64}\n", "seed must be a 64-bit unsigned integer"),
    ("zero_replications", "[scenario]\nreplications = 0\n", "replications must be ≥ 1"),
    ("unknown_variant", "[scenario]\nvariant = ID9\n", "variant must be one of ID0..ID3"),
    ("unknown_network", "[scenario]\nnetwork = grid\n", "unknown network 'grid'"),
    ("unknown_section", "[scenario]\n[weather]\nrain = 1\n", "unknown section [weather]"),
    ("unknown_key", "[scenario]\nspeed_limit = 40\n", "unknown key 'speed_limit' in [scenario]"),
    ("no_section", "duration = 600\n", "expected a [section] header"),
    ("duplicate_key", "[scenario]\nseed = 1\nseed = 2\n", "duplicate key 'seed'"),
    ("duplicate_section", "[scenario]\nseed = 1\n[scenario]\ndt = 0.1\n", "duplicate section [scenario]"),
    ("non_numeric", "[scenario]\nduration = long\n", "duration: expected a number"),
    ("shares_do_not_sum", "[classes]\nmotorcycle.share = 0.5\n", "class shares must sum to 1"),
    ("positive_braking", "[classes]\ncar.a_normal = 1.5\n", "car: a_normal must be < 0"),
    ("zero_ghr_sensitivity", "[ghr]\nr_plus = 0\n", "GHR r parameters must be > 0"),
    ("negative_route_count", "[demand]\nroute3 = -5\n", "route counts must be six values ≥ 0"),
    ("zero_horizon", "[demand]\nhorizon = 0\n", "demand horizon must be > 0"),
    ("infinite_duration", "[scenario]\nduration = inf\n", "duration: value must be finite"),
]
