"""Deterministic synthetic page loads with known ATS ground truth.

Every page is generated from its own RNG stream keyed by (seed, page index).
A page has a first-party app script plus:

* benign resources: first-party images/styles/API calls and third-party CDN
  libraries and widgets;
* trackers: each loads a script whose response sets a 16-character id
  cookie, then fires one or more beacons carrying the id;
* cookie syncs through a redirect (tracker A's ``/sync`` answers 302 to
  tracker B with A's id in the query) and through direct query strings
  (optionally md5 or base64 encoded);
* localStorage writers, benign URLs with ad-like keywords, and optionally
  first-party code that leaks a long id to its own API.

Benign cookies hold short values so they never produce shared-value edges.
"""

from __future__ import annotations

import os
import string
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .artifacts import atomic_write_text, csv_text, dumps_json
from .eventlog import PageLoadEvent, PageTrace, dump_trace
from .graph import transform_value
from .labels import ATS, NON_ATS, DOMAIN_ANCHOR, FilterRule, format_rules
from .urls import registrable_domain

_ALNUM = string.ascii_letters + string.digits
_LOWER = string.ascii_lowercase + string.digits

_TRACKER_HEADS = ("metri", "pulse", "clik", "beac", "logi", "stat", "quant", "audi", "vero", "opti", "segm", "tapi")
_TRACKER_TAILS = ("lytics", "nexus", "hub", "ly", "sense", "wave", "point", "stack", "loop", "grid")
_TRACKER_TLDS = ("com", "net", "io")
_BENIGN_DOMAINS = (
    "jslibcdn.net", "fontserve.com", "staticfiles.org", "mapwidgets.com",
    "videohost.net", "commentbox.io", "imgpipe.com", "payform.com",
)
_TRACKER_SCRIPTS = ("tag.js", "loader.js", "sdk.js", "pixel.js", "analytics.js", "t.js", "core.js")
_BEACON_PATHS = ("collect", "b", "event", "track", "p", "log", "hit", "i.gif")
_BENIGN_IMAGES = ("logo.png", "hero.jpg", "photo.jpg", "icon.svg", "thumb.webp")
_BENIGN_STYLES = ("main.css", "theme.css", "layout.css")
_BENIGN_LIBS = ("jquery.min.js", "react.js", "lodash.js", "player.js", "maps.js", "comments.js")
_API_PATHS = ("search", "items", "cart", "profile", "menu", "news")
_LOOKALIKES = (
    "/images/banner_300x250.jpg",
    "/promo/sponsor-logo.png",
    "/ads/house-campaign.css",
    "/static/advert_728x90.png",
    "/js/track-order.js",
    "/img/pixel-art.png",
    "/media/ad_slot_160x600.jpg",
    "/analytics/dashboard.css",
)


@dataclass(frozen=True)
class CorpusSpec:
    n_pages: int = 100
    seed: int = 0
    benign_resources: tuple[int, int] = (6, 14)
    trackers: tuple[int, int] = (2, 5)
    beacons_per_tracker: tuple[int, int] = (1, 3)
    redirect_sync_pairs: tuple[int, int] = (0, 2)
    query_sync_flows: tuple[int, int] = (0, 2)
    local_storage_writers: tuple[int, int] = (0, 2)
    benign_lookalikes: tuple[int, int] = (1, 3)
    benign_id_leaks: tuple[int, int] = (0, 1)
    tracker_pool: int = 40

    def __post_init__(self):
        if self.n_pages < 1:
            raise ValueError("n_pages must be at least 1")
        if self.tracker_pool < 1:
            raise ValueError("tracker_pool must be at least 1")
        for name in self.range_fields():
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"bad range for {name}: {(lo, hi)}")
            object.__setattr__(self, name, (int(lo), int(hi)))

    @classmethod
    def range_fields(cls) -> tuple[str, ...]:
        return tuple(n for n, f in cls.__dataclass_fields__.items() if f.type == "tuple[int, int]")

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusSpec":
        known = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def tracker_pool(spec: CorpusSpec) -> list[str]:
    """Tracker domains for the whole corpus, fixed by the master seed."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC0FFEE]))
    names: list[str] = []
    seen = set()
    while len(names) < spec.tracker_pool:
        name = (
            _TRACKER_HEADS[rng.integers(len(_TRACKER_HEADS))]
            + _TRACKER_TAILS[rng.integers(len(_TRACKER_TAILS))]
        )
        if name in seen:
            name += str(len(names))
        seen.add(name)
        names.append(f"{name}.{_TRACKER_TLDS[rng.integers(len(_TRACKER_TLDS))]}")
    return names


@dataclass
class GroundTruth:
    labels: dict[str, str]
    trackers: list[str]


class _PageBuilder:
    def __init__(self, rng: np.random.Generator, page_url: str, first_party: str):
        self.rng = rng
        self.trace = PageTrace(page_url, first_party)
        self.ts = 0
        self.counters = {"e": 0, "s": 0, "r": 0}
        self.labels: dict[str, str] = {}

    def _id(self, prefix: str) -> str:
        self.counters[prefix] += 1
        return f"{prefix}{self.counters[prefix]}"

    def emit(self, kind: str, **payload) -> None:
        self.ts += 1
        self.trace.events.append(PageLoadEvent(self.ts, kind, payload))

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def between(self, rng_range: tuple[int, int]) -> int:
        lo, hi = rng_range
        return int(self.rng.integers(lo, hi + 1))

    def token(self, n: int, alphabet: str = _ALNUM) -> str:
        return "".join(alphabet[i] for i in self.rng.integers(0, len(alphabet), size=n))

    # building blocks ------------------------------------------------------
    def element(self, tag: str, creator: tuple[str, str | None]) -> str:
        eid = self._id("e")
        self.emit("element_created", element_id=eid, tag=tag, creator={"kind": creator[0], "id": creator[1]})
        return eid

    def request(
        self,
        url: str,
        rtype: str,
        initiator: tuple[str, str | None],
        label: str,
        cookie_keys=(),
        status: int = 200,
        set_storage=(),
    ) -> str:
        rid = self._id("r")
        self.emit(
            "request",
            request_id=rid,
            url=url,
            resource_type=rtype,
            initiator={"kind": initiator[0], "id": initiator[1]},
            cookie_keys=list(cookie_keys),
        )
        self.labels[rid] = label
        self.emit("response", request_id=rid, status=status, set_storage=list(set_storage))
        return rid

    def redirect(self, rid: str, to_url: str, label: str, set_storage=()) -> str:
        new = self._id("r")
        self.emit("redirect", request_id=rid, new_request_id=new, to_url=to_url)
        self.labels[new] = label
        self.emit("response", request_id=new, status=200, set_storage=list(set_storage))
        return new

    def script_from(self, url: str, parent: tuple[str, str | None], label: str, set_storage=()) -> str:
        eid = self.element("script", parent)
        self.request(url, "script", ("element", eid), label, set_storage=set_storage)
        sid = self._id("s")
        self.emit("script_source", script_id=sid, url=url, parent_element=eid, is_eval=False)
        return sid

    def storage(self, kind: str, actor: tuple[str, str], storage: str, key: str, value: str) -> None:
        self.emit(kind, actor={"kind": actor[0], "id": actor[1]}, storage=storage, key=key, value=value)


@dataclass
class _Tracker:
    domain: str
    cookie: str
    uid: str
    script: str


def generate_page(spec: CorpusSpec, page_index: int, pool: list[str] | None = None) -> tuple[PageTrace, GroundTruth]:
    pool = pool or tracker_pool(spec)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, page_index]))
    first_party = f"site{page_index}-{''.join(_LOWER[i] for i in rng.integers(0, 26, size=4))}.com"
    b = _PageBuilder(rng, f"http://www.{first_party}/", first_party)
    parser = ("parser", None)
    fp_hosts = (f"www.{first_party}", f"static.{first_party}", f"cdn.{first_party}")

    # first-party app with a short session cookie
    session = b.token(6)
    app = b.script_from(
        f"http://www.{first_party}/static/app.js", parser, NON_ATS,
        set_storage=[{"storage": "cookie", "key": "sess", "value": session}],
    )

    n_trackers = min(b.between(spec.trackers), len(pool))
    chosen = sorted(int(i) for i in rng.choice(len(pool), size=n_trackers, replace=False))
    domains = [pool[i] for i in chosen]
    trackers: list[_Tracker] = []

    def add_tracker(domain: str) -> None:
        uid = b.token(16)
        cookie = domain.split(".")[0] + "_id"
        sid = b.script_from(
            f"http://{domain}/{b.pick(_TRACKER_SCRIPTS)}", parser, ATS,
            set_storage=[{"storage": "cookie", "key": cookie, "value": uid}],
        )
        if rng.random() < 0.25:
            frame = b.element("iframe", ("script", sid))
            b.request(f"http://{domain}/frame.html", "iframe", ("element", frame), ATS, cookie_keys=[cookie])
        for _ in range(max(1, b.between(spec.beacons_per_tracker))):
            img = b.element("img", ("script", sid))
            path = b.pick(_BEACON_PATHS)
            url = f"http://{domain}/{path}?uid={uid}&ev={b.token(4, _LOWER)}"
            b.request(url, "image", ("element", img), ATS, cookie_keys=[cookie])
        trackers.append(_Tracker(domain, cookie, uid, sid))

    def add_benign() -> None:
        choice = rng.random()
        if choice < 0.3:
            img = b.element("img", parser)
            b.request(f"http://{b.pick(fp_hosts)}/img/{b.pick(_BENIGN_IMAGES)}", "image", ("element", img), NON_ATS)
        elif choice < 0.45:
            link = b.element("link", parser)
            b.request(f"http://{b.pick(fp_hosts)}/css/{b.pick(_BENIGN_STYLES)}", "stylesheet", ("element", link), NON_ATS)
        elif choice < 0.65:
            b.request(
                f"http://www.{first_party}/api/{b.pick(_API_PATHS)}?page={int(rng.integers(1, 9))}",
                "xhr", ("script", app), NON_ATS, cookie_keys=["sess"],
            )
        elif choice < 0.85:
            host = b.pick(_BENIGN_DOMAINS)
            lib = b.script_from(f"http://{host}/lib/{b.pick(_BENIGN_LIBS)}", parser, NON_ATS)
            if rng.random() < 0.6:
                img = b.element("img", ("script", lib))
                b.request(f"http://{host}/assets/{b.pick(_BENIGN_IMAGES)}", "image", ("element", img), NON_ATS)
        else:
            host = b.pick(_BENIGN_DOMAINS)
            frame = b.element("iframe", parser)
            b.request(f"http://{host}/embed/{b.token(6, _LOWER)}", "iframe", ("element", frame), NON_ATS)

    def add_lookalike() -> None:
        path = b.pick(_LOOKALIKES)
        host = b.pick(fp_hosts) if rng.random() < 0.6 else b.pick(_BENIGN_DOMAINS)
        rtype = "stylesheet" if path.endswith(".css") else ("script" if path.endswith(".js") else "image")
        if rtype == "script":
            b.script_from(f"http://{host}{path}", parser, NON_ATS)
        else:
            el = b.element("link" if rtype == "stylesheet" else "img", parser)
            b.request(f"http://{host}{path}", rtype, ("element", el), NON_ATS)

    blocks = ["tracker"] * n_trackers + ["benign"] * b.between(spec.benign_resources)
    blocks += ["lookalike"] * b.between(spec.benign_lookalikes)
    order = rng.permutation(len(blocks))
    tracker_iter = iter(domains)
    for i in order:
        kind = blocks[int(i)]
        if kind == "tracker":
            add_tracker(next(tracker_iter))
        elif kind == "benign":
            add_benign()
        else:
            add_lookalike()

    # localStorage writers: trackers mirror their id into localStorage
    if trackers:
        for _ in range(b.between(spec.local_storage_writers)):
            t = b.pick(trackers)
            b.storage("storage_set", ("script", t.script), "local", f"_{t.cookie}", t.uid)
            b.storage("storage_get", ("script", t.script), "local", f"_{t.cookie}", t.uid)

    if len(trackers) >= 2:
        for _ in range(b.between(spec.redirect_sync_pairs)):
            ia, ib = (int(x) for x in rng.choice(len(trackers), size=2, replace=False))
            ta, tb = trackers[ia], trackers[ib]
            img = b.element("img", ("script", ta.script))
            rid = b.request(f"http://{ta.domain}/sync", "image", ("element", img), ATS,
                            cookie_keys=[ta.cookie], status=302)
            b.redirect(
                rid, f"http://{tb.domain}/setuid?a_uid={ta.uid}", ATS,
                set_storage=[{"storage": "cookie", "key": tb.cookie, "value": tb.uid}],
            )
        for _ in range(b.between(spec.query_sync_flows)):
            ia, ic = (int(x) for x in rng.choice(len(trackers), size=2, replace=False))
            ta, tc = trackers[ia], trackers[ic]
            b.storage("storage_get", ("script", ta.script), "cookie", ta.cookie, ta.uid)
            encoded = transform_value(ta.uid, b.pick(("identity", "md5", "base64")))
            b.request(
                f"http://{tc.domain}/match?partner={ta.domain.split('.')[0]}&puid={encoded}",
                "xhr", ("script", ta.script), ATS,
            )

    for _ in range(b.between(spec.benign_id_leaks)):
        sid_value = b.token(16)
        b.storage("storage_set", ("script", app), "local", "client_id", sid_value)
        b.request(f"http://www.{first_party}/api/session?cid={sid_value}", "xhr", ("script", app), NON_ATS)

    truth = GroundTruth(dict(b.labels), [t.domain for t in trackers])
    return b.trace, truth


def truth_from_domains(trace: PageTrace, tracker_domains) -> dict[str, str]:
    """Ground truth recomputed from URLs alone: tracker registrable domain means ATS."""
    domains = set(tracker_domains)
    out = {}
    for ev in trace.events:
        if ev.kind == "request":
            rid, url = ev["request_id"], ev["url"]
        elif ev.kind == "redirect":
            rid, url = ev["new_request_id"], ev["to_url"]
        else:
            continue
        out[rid] = ATS if registrable_domain(url) in domains else NON_ATS
    return out


def generate_pages(spec: CorpusSpec):
    pool = tracker_pool(spec)
    for i in range(spec.n_pages):
        yield i, *generate_page(spec, i, pool)


def corpus_rules(spec: CorpusSpec) -> list[FilterRule]:
    return [FilterRule(DOMAIN_ANCHOR, d) for d in sorted(tracker_pool(spec))]


def generate_corpus(spec: CorpusSpec, out_dir) -> dict:
    """Write traces, manifest, ground-truth labels and filter rules; return the manifest."""
    out = Path(out_dir)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    label_rows = []
    pages = []
    for i, trace, truth in generate_pages(spec):
        name = f"pages/page_{i}.jsonl"
        atomic_write_text(out / name, dump_trace(trace))
        for rid, label in truth.labels.items():
            label_rows.append((i, rid, label))
        pages.append({
            "index": i,
            "file": name,
            "page_url": trace.page_url,
            "first_party": trace.first_party,
            "n_events": len(trace.events),
            "trackers": truth.trackers,
        })
    manifest = {"spec": spec.to_dict(), "n_pages": spec.n_pages, "pages": pages}
    atomic_write_text(out / "manifest.json", dumps_json(manifest))
    atomic_write_text(out / "labels.csv", csv_text(["page", "request_id", "label"], label_rows))
    atomic_write_text(out / "rules.txt", format_rules(corpus_rules(spec)))
    return manifest


def read_manifest(corpus_dir) -> dict:
    import json

    with open(os.path.join(corpus_dir, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)
