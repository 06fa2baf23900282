"""Check-in records, dataset files and the graph structures built from them.

File formats (UTF-8, tab-separated, one record per line, ``#`` comments and
blank lines ignored):

``pois.tsv``      poi_id, region (home|out), lat, lon
``checkins.tsv``  user_id, timestamp, poi_id
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ContractError, ParseError, SchemaError

POIS_FILE = "pois.tsv"
CHECKINS_FILE = "checkins.tsv"

MIN_HOME_CHECKINS = 5
MIN_OUT_CHECKINS = 3


@dataclass(frozen=True)
class Poi:
    id: int
    region: str
    lat: float
    lon: float
    token: str = ""

    def __post_init__(self):
        if self.region not in ("home", "out"):
            raise SchemaError(f"unknown region {self.region!r}")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise SchemaError(f"coordinates out of range for POI {self.token or self.id}: {self.lat}, {self.lon}")


@dataclass(frozen=True)
class CheckIn:
    user: int
    time: int
    poi: int

    def __post_init__(self):
        if self.time < 0:
            raise SchemaError(f"negative timestamp {self.time}")


@dataclass
class TravelBehavior:
    user: int
    home_seq: list
    out_set: list
    home_region: str = "home"
    out_region: str = "out"
    token: str = ""

    @property
    def home_pois(self):
        return np.array([c.poi for c in self.home_seq], dtype=np.int64)

    @property
    def out_pois(self):
        return np.array([c.poi for c in self.out_set], dtype=np.int64)

    def positives(self):
        """Sorted distinct out-POIs visited by the user."""
        return np.unique(self.out_pois)


@dataclass
class LoadReport:
    users_total: int = 0
    users_kept: int = 0
    filtered_users: int = 0
    home_pois: int = 0
    out_pois: int = 0
    home_checkins: int = 0
    out_checkins: int = 0
    filtered_checkins: int = 0
    split_sizes: tuple = (0, 0, 0)

    def to_text(self):
        rows = [
            ("users_total", self.users_total),
            ("users_kept", self.users_kept),
            ("filtered_users", self.filtered_users),
            ("home_pois", self.home_pois),
            ("out_pois", self.out_pois),
            ("home_checkins", self.home_checkins),
            ("out_checkins", self.out_checkins),
            ("filtered_checkins", self.filtered_checkins),
            ("train_users", self.split_sizes[0]),
            ("valid_users", self.split_sizes[1]),
            ("test_users", self.split_sizes[2]),
        ]
        return "".join(f"{k}\t{v}\n" for k, v in rows)


@dataclass
class Dataset:
    pois: list
    home_tokens: list
    out_tokens: list
    out_coords: np.ndarray
    train: list
    valid: list
    test: list
    report: LoadReport = field(default_factory=LoadReport)
    split_seed: int = 0

    @property
    def n_home(self):
        return len(self.home_tokens)

    @property
    def n_out(self):
        return len(self.out_tokens)

    def users(self):
        return self.train + self.valid + self.test


@dataclass
class SessionGraph:
    nodes: np.ndarray
    a_out: np.ndarray
    a_in: np.ndarray

    @property
    def size(self):
        return len(self.nodes)


@dataclass
class SessionBatch:
    """Session graphs zero-padded to a common node count ``N``."""

    nodes: np.ndarray   # [B, N] home-POI ids (0 where padded)
    mask: np.ndarray    # [B, N] 1.0 for real nodes
    a_out: np.ndarray   # [B, N, N]
    a_in: np.ndarray    # [B, N, N]

    def __len__(self):
        return self.nodes.shape[0]


@dataclass
class GeoGraph:
    a_geo: np.ndarray
    raw: np.ndarray


# ---------------------------------------------------------------------------
# parsing

def _split_line(line, n_fields, path, lineno):
    parts = line.rstrip("\n").rstrip("\r").split("\t")
    if len(parts) != n_fields:
        raise ParseError(f"expected {n_fields} tab-separated fields, got {len(parts)}", lineno, path)
    return parts


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def read_pois(path):
    """Returns (home tokens, out tokens, home coords, out coords) in file order."""
    tokens = {"home": [], "out": []}
    coords = {"home": [], "out": []}
    seen = set()
    for lineno, line in _records(path):
        tok, region, lat, lon = _split_line(line, 4, path, lineno)
        if region not in ("home", "out"):
            raise ParseError(f"region must be 'home' or 'out', got {region!r}", lineno, path)
        try:
            lat, lon = float(lat), float(lon)
        except ValueError:
            raise ParseError("lat/lon must be numbers", lineno, path) from None
        if not (np.isfinite(lat) and np.isfinite(lon)) or abs(lat) > 90 or abs(lon) > 180:
            raise ParseError(f"coordinates out of range: {lat}, {lon}", lineno, path)
        if tok in seen:
            raise ParseError(f"duplicate POI id {tok!r}", lineno, path)
        seen.add(tok)
        tokens[region].append(tok)
        coords[region].append((lat, lon))
    return (tokens["home"], tokens["out"],
            np.array(coords["home"], dtype=np.float64).reshape(-1, 2),
            np.array(coords["out"], dtype=np.float64).reshape(-1, 2))


def read_checkins(path):
    """Yields (user token, timestamp, poi token) in file order."""
    for lineno, line in _records(path):
        user, ts, poi = _split_line(line, 3, path, lineno)
        try:
            ts = int(ts)
        except ValueError:
            raise ParseError(f"timestamp must be an integer, got {ts!r}", lineno, path) from None
        if ts < 0:
            raise ParseError("timestamp must be nonnegative", lineno, path)
        yield lineno, user, ts, poi


def split_users(n, seed, proportions=(0.8, 0.1, 0.1)):
    """Deterministic permutation of range(n) cut into train/valid/test index arrays."""
    props = np.asarray(proportions, dtype=np.float64)
    if props.shape != (3,) or np.any(props < 0) or props.sum() <= 0:
        raise ContractError(f"bad split proportions {proportions}")
    props = props / props.sum()
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(props[0] * n))
    n_valid = int(round(props[1] * n))
    n_valid = min(n_valid, n - n_train)
    return perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]


def load_dataset(path, split_seed=0, proportions=(0.8, 0.1, 0.1),
                 min_home=MIN_HOME_CHECKINS, min_out=MIN_OUT_CHECKINS):
    path = Path(path)
    pois_path, chk_path = path / POIS_FILE, path / CHECKINS_FILE
    home_tokens, out_tokens, home_xy, out_xy = read_pois(pois_path)
    home_ix = {t: i for i, t in enumerate(home_tokens)}
    out_ix = {t: i for i, t in enumerate(out_tokens)}
    pois = [Poi(i, "home", float(a), float(b), t) for i, (t, (a, b)) in enumerate(zip(home_tokens, home_xy))]
    pois += [Poi(i, "out", float(a), float(b), t) for i, (t, (a, b)) in enumerate(zip(out_tokens, out_xy))]

    user_ix = {}
    home_raw, out_raw = [], []
    for lineno, user, ts, poi in read_checkins(chk_path):
        if poi in home_ix:
            region, pid = 0, home_ix[poi]
        elif poi in out_ix:
            region, pid = 1, out_ix[poi]
        else:
            raise SchemaError(f"{chk_path}:{lineno}: POI {poi!r} has no coordinates in {POIS_FILE}")
        uid = user_ix.setdefault(user, len(user_ix))
        if uid == len(home_raw):
            home_raw.append([])
            out_raw.append([])
        (home_raw if region == 0 else out_raw)[uid].append(CheckIn(uid, ts, pid))

    report = LoadReport(users_total=len(user_ix), home_pois=len(home_tokens), out_pois=len(out_tokens))
    kept = []
    for token, uid in user_ix.items():
        h, o = home_raw[uid], out_raw[uid]
        if len(h) < min_home or len(o) < min_out:
            report.filtered_users += 1
            report.filtered_checkins += len(h) + len(o)
            continue
        # stable sort keeps file order among equal timestamps
        h = sorted(h, key=lambda c: c.time)
        kept.append(TravelBehavior(user=len(kept), home_seq=h, out_set=list(o), token=token))
        report.home_checkins += len(h)
        report.out_checkins += len(o)
    # user ids are dense over kept users, in first-appearance order
    for i, tb in enumerate(kept):
        tb.home_seq = [CheckIn(i, c.time, c.poi) for c in tb.home_seq]
        tb.out_set = [CheckIn(i, c.time, c.poi) for c in tb.out_set]
    report.users_kept = len(kept)

    tr, va, te = split_users(len(kept), split_seed, proportions)
    train = [kept[i] for i in tr]
    valid = [kept[i] for i in va]
    test = [kept[i] for i in te]
    report.split_sizes = (len(train), len(valid), len(test))
    return Dataset(pois=pois, home_tokens=home_tokens, out_tokens=out_tokens, out_coords=out_xy,
                   train=train, valid=valid, test=test, report=report, split_seed=split_seed)


def write_dataset(path, pois, checkins):
    """Write ``pois`` as (token, region, lat, lon) and ``checkins`` as (user, ts, poi) rows."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / POIS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for tok, region, lat, lon in pois:
            fh.write(f"{tok}\t{region}\t{lat:.6f}\t{lon:.6f}\n")
    with open(path / CHECKINS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for user, ts, poi in checkins:
            fh.write(f"{user}\t{int(ts)}\t{poi}\n")


# ---------------------------------------------------------------------------
# derived structures

def build_session_graph(home_seq):
    """Directed transition graph of a home check-in sequence.

    Accepts CheckIns or plain POI ids. Consecutive repeats add no edge.
    """
    if len(home_seq) == 0:
        raise ContractError("session graph needs at least one check-in")
    seq = np.array([c.poi if isinstance(c, CheckIn) else c for c in home_seq], dtype=np.int64)
    nodes, a_out, a_in = kernels.session_graph(seq)
    return SessionGraph(nodes=nodes, a_out=a_out, a_in=a_in)


def batch_session_graphs(graphs):
    n = max(g.size for g in graphs)
    b = len(graphs)
    nodes = np.zeros((b, n), dtype=np.int64)
    mask = np.zeros((b, n))
    a_out = np.zeros((b, n, n))
    a_in = np.zeros((b, n, n))
    for i, g in enumerate(graphs):
        k = g.size
        nodes[i, :k] = g.nodes
        mask[i, :k] = 1.0
        a_out[i, :k, :k] = g.a_out
        a_in[i, :k, :k] = g.a_in
    return SessionBatch(nodes=nodes, mask=mask, a_out=a_out, a_in=a_in)


def build_geo_graph(coords, norm="row"):
    """exp(-haversine km) weights between out-POIs; rows normalized when ``norm='row'``."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if norm not in ("row", "none"):
        raise ContractError(f"geo_norm must be 'row' or 'none', got {norm!r}")
    dist = kernels.haversine_matrix(np.ascontiguousarray(coords[:, 0]), np.ascontiguousarray(coords[:, 1]))
    raw = np.exp(-dist)
    a = raw / raw.sum(axis=1, keepdims=True) if norm == "row" else raw.copy()
    return GeoGraph(a_geo=a, raw=raw)


def to_bag_of_words(out_set, d2):
    ids = np.array([c.poi if isinstance(c, CheckIn) else c for c in out_set], dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= d2):
        raise IndexError(f"out-POI id outside [0, {d2})")
    return np.bincount(ids, minlength=d2).astype(np.int64)
