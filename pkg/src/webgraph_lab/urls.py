"""URL parsing helpers and registrable-domain (eTLD+1) lookup.

The suffix rules come from a trimmed public-suffix snapshot shipped in
``data/public_suffix_list.dat``.  Point ``WEBGRAPH_LAB_PSL`` at a full
list (same format) to override it.
"""

from __future__ import annotations

import ipaddress
import os
from functools import lru_cache
from importlib import resources
from urllib.parse import SplitResult, unquote, urlsplit, urlunsplit

__all__ = [
    "UnparseableUrl",
    "SuffixList",
    "default_suffixes",
    "load_suffixes",
    "parse_url",
    "hostname",
    "registrable_domain",
    "is_third_party",
    "is_subdomain_of",
    "url_tokens",
    "rewrite_url_tokens",
]


class UnparseableUrl(ValueError):
    """Raised when a string cannot be read as an http(s) URL with a host."""

    def __init__(self, url: object, reason: str = "unparseable URL"):
        super().__init__(f"{reason}: {url!r}")
        self.url = url


class SuffixList:
    """Public-suffix rules with wildcard and exception support."""

    def __init__(self, rules):
        self.exact: set[str] = set()
        self.wildcards: set[str] = set()
        self.exceptions: set[str] = set()
        for raw in rules:
            rule = raw.strip().lower()
            if not rule or rule.startswith("//"):
                continue
            rule = rule.split()[0]
            if rule.startswith("!"):
                self.exceptions.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcards.add(rule[2:])
            else:
                self.exact.add(rule)

    @classmethod
    def from_text(cls, text: str) -> "SuffixList":
        return cls(text.splitlines())

    def suffix_length(self, labels: list[str]) -> int:
        """Number of trailing labels forming the public suffix.

        Unlisted TLDs fall back to the implicit ``*`` rule, so the answer is
        never below 1.  That fallback is what makes "last two labels" the
        registrable domain for unknown suffixes.
        """
        best = 1
        n = len(labels)
        for i in range(n):
            candidate = ".".join(labels[i:])
            size = n - i
            if candidate in self.exceptions:
                return size - 1
            if candidate in self.exact:
                best = max(best, size)
            # "*.ck" covers "anything.ck"
            if i + 1 < n and ".".join(labels[i + 1:]) in self.wildcards:
                best = max(best, size)
        return best

    def registrable_domain(self, host: str) -> str:
        host = host.strip(".").lower()
        if not host:
            return host
        if _is_ip(host):
            return host
        labels = host.split(".")
        k = self.suffix_length(labels)
        if k >= len(labels):
            # host is itself a public suffix
            return host
        return ".".join(labels[-(k + 1):])


def _is_ip(host: str) -> bool:
    try:
        ipaddress.ip_address(host.strip("[]"))
    except ValueError:
        return False
    return True


def load_suffixes(path: str | os.PathLike) -> SuffixList:
    with open(path, encoding="utf-8") as fh:
        return SuffixList(fh)


@lru_cache(maxsize=1)
def default_suffixes() -> SuffixList:
    override = os.environ.get("WEBGRAPH_LAB_PSL")
    if override:
        return load_suffixes(override)
    text = resources.files("webgraph_lab").joinpath("data/public_suffix_list.dat").read_text("utf-8")
    return SuffixList.from_text(text)


@lru_cache(maxsize=65536)
def parse_url(url: str) -> SplitResult:
    if not isinstance(url, str) or not url:
        raise UnparseableUrl(url)
    try:
        parts = urlsplit(url)
        host = parts.hostname
    except ValueError as exc:
        raise UnparseableUrl(url, str(exc)) from None
    if parts.scheme not in ("http", "https") or not host:
        raise UnparseableUrl(url)
    return parts


def hostname(url: str) -> str:
    return parse_url(url).hostname or ""


@lru_cache(maxsize=65536)
def _registrable(host: str, suffixes: SuffixList) -> str:
    return suffixes.registrable_domain(host)


def registrable_domain(url_or_host: str, suffixes: SuffixList | None = None) -> str:
    """eTLD+1 of a URL or bare hostname."""
    suffixes = suffixes or default_suffixes()
    if "://" in url_or_host:
        host = hostname(url_or_host)
    else:
        host = url_or_host
    return _registrable(host.lower().strip("."), suffixes)


def is_third_party(url: str, first_party: str, suffixes: SuffixList | None = None) -> bool:
    return registrable_domain(url, suffixes) != first_party.lower()


def is_subdomain_of(url: str, first_party: str, suffixes: SuffixList | None = None) -> bool:
    """True when the host is a strict subdomain of the first party."""
    host = hostname(url)
    fp = first_party.lower()
    return host != fp and registrable_domain(host, suffixes) == fp


def _query_pieces(query: str):
    for piece in query.split("&"):
        if piece:
            name, eq, value = piece.partition("=")
            yield name, eq, value


def url_tokens(url: str) -> list[str]:
    """Exact-match tokens for identifier matching.

    Path segments (split on ``/``) and query values (split on ``&``, then the
    first ``=``), percent-decoded.  Parameters without ``=`` contribute the
    whole piece.
    """
    parts = parse_url(url)
    tokens = [unquote(seg) for seg in parts.path.split("/") if seg]
    for name, eq, value in _query_pieces(parts.query):
        tokens.append(unquote(value) if eq else unquote(name))
    return [t for t in tokens if t]


def rewrite_url_tokens(url: str, mapping: dict[str, str]) -> str:
    """Replace path segments and query values found in ``mapping``."""
    parts = parse_url(url)
    segs = parts.path.split("/")
    segs = [mapping.get(unquote(s), s) if s else s for s in segs]
    pieces = []
    for piece in parts.query.split("&") if parts.query else []:
        name, eq, value = piece.partition("=")
        if eq:
            value = mapping.get(unquote(value), value)
            pieces.append(f"{name}={value}")
        else:
            pieces.append(mapping.get(unquote(name), name))
    return urlunsplit((parts.scheme, parts.netloc, "/".join(segs), "&".join(pieces), parts.fragment))
