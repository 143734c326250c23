"""URL fetching and crash-safe file writes shared by the services."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any
from urllib.parse import urlparse
from urllib.request import url2pathname

import httpx


class FetchFailed(IOError):
    def __init__(self, url: str, reason: str):
        self.url = url
        super().__init__(f"cannot fetch {url}: {reason}")


def file_url(path: Path | str) -> str:
    return Path(path).resolve().as_uri()


def url_to_path(url: str) -> Path:
    parsed = urlparse(url)
    if parsed.scheme != "file":
        raise ValueError(f"not a file URL: {url}")
    return Path(url2pathname(parsed.path))


def fetch_url(url: str, timeout: float = 30.0) -> bytes:
    """Bytes behind a file:// or http(s):// URL; a plain path is read as a file."""
    parsed = urlparse(url)
    if parsed.scheme in ("http", "https"):
        try:
            resp = httpx.get(url, timeout=timeout, follow_redirects=True)
        except httpx.HTTPError as exc:
            raise FetchFailed(url, str(exc)) from exc
        if resp.status_code != 200:
            raise FetchFailed(url, f"HTTP {resp.status_code}")
        return resp.content
    path = url_to_path(url) if parsed.scheme == "file" else Path(url)
    try:
        return path.read_bytes()
    except OSError as exc:
        raise FetchFailed(url, exc.strerror or str(exc)) from exc


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write-then-rename in the target directory; readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_json(path: Path, doc: Any) -> None:
    atomic_write_bytes(path, json.dumps(doc, indent=2, sort_keys=True).encode("utf-8"))


def read_json(path: Path, default: Any = None) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return default
