"""Synthetic travel behavior with planted intentions.

Out-of-town POIs are split into ``k_true`` groups, one per planted intention,
each placed around its own spatial center. Home POIs are split into clusters;
a user's home cluster determines their dominant intention with probability
``intention_fidelity``. ``concentration`` controls how much probability leaks
out of the dominant group: leak = 1 / (1 + concentration).
"""
from dataclasses import dataclass

import numpy as np

from ..config import SynthConfig
from ..dataio import write_dataset
from ..errors import ConfigError

T0 = 1561939200  # 2019-07-01 00:00 UTC


@dataclass
class SynthData:
    pois: list            # (token, region, lat, lon)
    checkins: list        # (user token, timestamp, poi token)
    phi: np.ndarray       # [k_true, n_out] planted intention distributions
    out_group: np.ndarray  # planted intention owning each out-POI
    home_cluster: np.ndarray  # cluster of each home POI
    user_cluster: np.ndarray
    user_intention: np.ndarray  # dominant planted intention per user
    user_out: list        # out-POI ids per user


def _place(rng, center, spread, box, n):
    lat = np.clip(rng.normal(center[0], spread[0], n), box[0], box[2])
    lon = np.clip(rng.normal(center[1], spread[1], n), box[1], box[3])
    return lat, lon


def _centers(rng, box, n):
    lat = rng.uniform(box[0] + 0.15 * (box[2] - box[0]), box[2] - 0.15 * (box[2] - box[0]), n)
    lon = rng.uniform(box[1] + 0.15 * (box[3] - box[1]), box[3] - 0.15 * (box[3] - box[1]), n)
    return np.stack([lat, lon], axis=1)


def _partition(rng, n, k):
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % k
    return labels


def generate_synthetic(cfg=None, out_dir=None):
    cfg = cfg or SynthConfig()
    if cfg.n_home_clusters > cfg.n_home_pois or cfg.k_true > cfg.n_out_pois:
        raise ConfigError("more clusters than POIs")
    rng = np.random.default_rng(cfg.seed)
    leak = 1.0 / (1.0 + cfg.concentration)
    k, n_out, n_home = cfg.k_true, cfg.n_out_pois, cfg.n_home_pois

    # out-of-town POIs and intentions
    out_group = _partition(rng, n_out, k)
    out_centers = _centers(rng, cfg.out_box, k)
    out_spread = (0.06 * (cfg.out_box[2] - cfg.out_box[0]), 0.06 * (cfg.out_box[3] - cfg.out_box[1]))
    out_lat, out_lon = np.empty(n_out), np.empty(n_out)
    for g in range(k):
        sel = np.flatnonzero(out_group == g)
        out_lat[sel], out_lon[sel] = _place(rng, out_centers[g], out_spread, cfg.out_box, sel.size)
    popularity = rng.gamma(0.8, 1.0, n_out) + 1e-3
    phi = np.zeros((k, n_out))
    for g in range(k):
        inside = np.where(out_group == g, popularity, 0.0)
        phi[g] = (1.0 - leak) * inside / inside.sum() + leak / n_out

    # home POIs and clusters
    home_cluster = _partition(rng, n_home, cfg.n_home_clusters)
    home_centers = _centers(rng, cfg.home_box, cfg.n_home_clusters)
    home_spread = (0.06 * (cfg.home_box[2] - cfg.home_box[0]), 0.06 * (cfg.home_box[3] - cfg.home_box[1]))
    home_lat, home_lon = np.empty(n_home), np.empty(n_home)
    members = []
    for c in range(cfg.n_home_clusters):
        sel = np.flatnonzero(home_cluster == c)
        home_lat[sel], home_lon[sel] = _place(rng, home_centers[c], home_spread, cfg.home_box, sel.size)
        members.append(sel)
    home_pop = rng.gamma(1.0, 1.0, n_home) + 1e-3

    pois = [(f"h{j:04d}", "home", home_lat[j], home_lon[j]) for j in range(n_home)]
    pois += [(f"o{j:04d}", "out", out_lat[j], out_lon[j]) for j in range(n_out)]

    user_cluster = rng.integers(0, cfg.n_home_clusters, cfg.n_users)
    user_intention = np.empty(cfg.n_users, dtype=np.int64)
    user_out = []
    checkins = []
    for u in range(cfg.n_users):
        c = user_cluster[u]
        primary = c % k
        if rng.random() >= cfg.intention_fidelity:
            primary = rng.integers(0, k)
        user_intention[u] = primary
        theta = (1.0 - leak) * np.eye(k)[primary] + leak * rng.dirichlet(np.ones(k))
        token = f"u{u:05d}"

        # home sequence: a walk along the cluster's ring with occasional jumps
        ring = members[c]
        n_h = rng.integers(cfg.home_checkins[0], cfg.home_checkins[1] + 1)
        w = home_pop[ring]
        pos = rng.choice(ring.size, p=w / w.sum())
        ts = T0 + int(rng.integers(0, 90 * 86400))
        for _ in range(n_h):
            if rng.random() < cfg.home_stickiness:
                poi = ring[pos]
            else:
                poi = rng.integers(0, n_home)
            checkins.append((token, ts, f"h{poi:04d}"))
            pos = (pos + rng.integers(1, 4)) % ring.size
            ts += int(rng.integers(600, 86400))

        n_o = rng.integers(cfg.out_checkins[0], cfg.out_checkins[1] + 1)
        p = theta @ phi
        visits = rng.choice(n_out, size=n_o, p=p / p.sum())
        ts += int(rng.integers(86400, 30 * 86400))
        for v in visits:
            checkins.append((token, ts, f"o{v:04d}"))
            ts += int(rng.integers(600, 14400))
        user_out.append(visits)

    data = SynthData(pois=pois, checkins=checkins, phi=phi, out_group=out_group, home_cluster=home_cluster,
                     user_cluster=user_cluster, user_intention=user_intention, user_out=user_out)
    if out_dir is not None:
        write_dataset(out_dir, pois, checkins)
    return data
