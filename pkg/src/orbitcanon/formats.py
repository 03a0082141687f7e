"""File formats: PGM rasters, IDX archives, XYZ/OFF clouds, reports, models.

Readers validate aggressively and raise ValueError with a location when
the input is malformed; writers are byte-deterministic so that identical
inputs always serialize to identical files.  Floats are written with 17
significant digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import GrayImage

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801

_MODEL_MAGIC = b"OCLM0001"

_F17 = "{:.17g}".format


# ---------------------------------------------------------------------------
# PGM


def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated ASCII integers starting at pos.

    '#' starts a comment running to end of line, as the format allows.
    Returns the values and the offset one past the final token.
    """
    values: list[int] = []
    n = len(data)
    while len(values) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in (10, 13):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise ValueError("truncated header: expected more numeric fields")
        try:
            values.append(int(token))
        except ValueError:
            raise ValueError(f"non-numeric header token {token!r}") from None
    return values, pos


def read_pgm(data: bytes) -> GrayImage:
    """Parse a PGM (P5 binary or P2 ASCII) into a grayscale image.

    Values are scaled by the file's maxval into [0, 1].  Binary rasters
    use one byte per sample for maxval < 256 and two big-endian bytes
    otherwise, per the format.
    """
    if len(data) < 2:
        raise ValueError("not a PGM file: too short")
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"not a PGM file: magic {magic!r} (want P5 or P2)")
    (width, height, maxval), pos = _pgm_tokens(data, 3, 2)
    if width < 1 or height < 1:
        raise ValueError(f"bad dimensions {width} x {height}")
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} out of range 1..65535")

    if magic == b"P2":
        flat, _ = _pgm_tokens(data, width * height, pos)
        raster = np.array(flat, dtype=float).reshape(height, width)
    else:
        pos += 1  # exactly one whitespace byte separates header and raster
        sample = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = width * height * sample.itemsize
        payload = data[pos:pos + need]
        if len(payload) < need:
            raise ValueError(
                f"truncated raster: need {need} bytes, have {len(payload)}")
        raster = np.frombuffer(payload, dtype=sample).astype(float)
        raster = raster.reshape(height, width)
    if raster.max(initial=0.0) > maxval:
        raise ValueError(f"sample value exceeds maxval {maxval}")
    return GrayImage(raster / maxval)


def write_pgm(img: GrayImage, maxval: int = 255) -> bytes:
    """Serialize an image as binary P5 with the given maxval.

    Pixels in [0, 1] are scaled to 0..maxval and rounded half away from
    zero, so 0.5 / 255 lands on 1.  Deterministic: equal images yield
    equal bytes.
    """
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} out of range 1..65535")
    q = np.floor(img.pixels * maxval + 0.5).astype(np.uint16)
    q = np.minimum(q, maxval)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    if maxval > 255:
        return header + q.astype(">u2").tobytes()
    return header + q.astype("u1").tobytes()


# ---------------------------------------------------------------------------
# IDX


def _idx_header(data: bytes, expect_magic: int, rank: int, kind: str):
    need = 4 * (1 + rank)
    if len(data) < need:
        raise ValueError(f"truncated IDX {kind} header")
    magic = struct.unpack(">i", data[:4])[0]
    if magic != expect_magic:
        raise ValueError(
            f"bad IDX {kind} magic 0x{magic:08x} (want 0x{expect_magic:08x})")
    dims = struct.unpack(f">{rank}i", data[4:need])
    if any(d < 0 for d in dims):
        raise ValueError(f"negative IDX dimension in {dims}")
    return dims, need


def read_idx_images(data: bytes) -> list[GrayImage]:
    """Parse an IDX image archive into a list of square grayscale images.

    The archive stores unsigned bytes scaled here by 1/255.  Non-square
    rasters are rejected because the rotation pipeline needs square input.
    """
    (count, rows, cols), pos = _idx_header(data, _IDX_IMAGES_MAGIC, 3, "image")
    if rows != cols:
        raise ValueError(f"IDX rasters are {rows} x {cols}, need square images")
    need = count * rows * cols
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise ValueError(f"truncated IDX raster data: need {need} bytes")
    cube = np.frombuffer(payload, dtype="u1").reshape(count, rows, cols)
    return [GrayImage(cube[i] / 255.0) for i in range(count)]


def read_idx_labels(data: bytes) -> np.ndarray:
    """Parse an IDX label file into an int array; labels must be 0..9."""
    (count,), pos = _idx_header(data, _IDX_LABELS_MAGIC, 1, "label")
    payload = data[pos:pos + count]
    if len(payload) < count:
        raise ValueError(f"truncated IDX label data: need {count} bytes")
    labels = np.frombuffer(payload, dtype="u1").astype(int)
    if labels.size and labels.max() > 9:
        raise ValueError(f"label {labels.max()} outside 0..9")
    return labels


# ---------------------------------------------------------------------------
# XYZ / OFF


def read_xyz(text: str) -> np.ndarray:
    """Parse whitespace-separated x y z lines into an N x 3 array.

    Blank lines and lines starting with '#' are skipped; anything else
    with other than three fields is an error reported with its line
    number.
    """
    points = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            points.append([float(p) for p in parts])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric coordinate") from None
    if not points:
        raise ValueError("no points in XYZ input")
    X = np.array(points, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite coordinate in XYZ input")
    return X


def write_xyz(points) -> str:
    """Serialize an N x 3 array as one 'x y z' line per point, 17 digits."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError("expected an N x 3 point array")
    lines = [" ".join(_F17(v) for v in row) for row in X]
    return "\n".join(lines) + "\n"


def read_off(text: str) -> np.ndarray:
    """Read the vertices of an OFF mesh as an N x 3 array; faces are ignored."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines:
        raise ValueError("empty OFF input")
    lineno, header = lines[0]
    body = lines[1:]
    if header != "OFF":
        # Some files cram the counts onto the OFF line itself.
        if header.startswith("OFF") and len(header.split()) == 4:
            body = [(lineno, header[3:].strip())] + body
        else:
            raise ValueError(f"line {lineno}: not an OFF file")
    if not body:
        raise ValueError("OFF input has no counts line")
    lineno, counts = body[0]
    parts = counts.split()
    if len(parts) != 3:
        raise ValueError(f"line {lineno}: counts line needs 3 fields")
    try:
        n_vertices, n_faces, _ = (int(p) for p in parts)
    except ValueError:
        raise ValueError(f"line {lineno}: non-integer counts") from None
    if n_vertices < 1:
        raise ValueError(f"line {lineno}: vertex count {n_vertices} < 1")
    vertex_lines = body[1:1 + n_vertices]
    if len(vertex_lines) < n_vertices:
        raise ValueError(f"OFF input ends after {len(vertex_lines)} of "
                         f"{n_vertices} vertices")
    points = []
    for lineno, line in vertex_lines:
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"line {lineno}: vertex needs 3 coordinates")
        try:
            points.append([float(p) for p in parts[:3]])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric vertex coordinate") from None
    X = np.array(points, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite vertex coordinate in OFF input")
    return X


# ---------------------------------------------------------------------------
# Audit reports


@dataclass
class ReportDocument:
    """An audit result in serializable form.

    `grid` holds one string label per evaluated transform (degrees for 2-D
    sweeps, 'i:j' grid steps for 3-D, the scale factor for scale sweeps)
    and `curve` the matching per-transform accuracy.
    """

    kind: str
    mode: str
    scheme: str
    canonicalized: bool
    n_samples: int
    clean: float
    average: float
    worst: float
    grid: tuple[str, ...]
    curve: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ReportDocument):
            return NotImplemented
        return (self.kind == other.kind and self.mode == other.mode
                and self.scheme == other.scheme
                and self.canonicalized == other.canonicalized
                and self.n_samples == other.n_samples
                and self.clean == other.clean
                and self.average == other.average
                and self.worst == other.worst
                and self.grid == other.grid
                and np.array_equal(self.curve, other.curve))


def write_report(doc: ReportDocument) -> str:
    """Serialize a report as CSV with a '#'-prefixed metadata preamble.

    Floats carry 17 significant digits so reading the file back
    reproduces the summary numbers exactly.
    """
    if len(doc.grid) != len(doc.curve):
        raise ValueError("grid and curve lengths differ")
    out = io.StringIO()
    out.write("# orbitcanon report v1\n")
    out.write(f"# kind={doc.kind}\n")
    out.write(f"# mode={doc.mode}\n")
    out.write(f"# scheme={doc.scheme}\n")
    out.write(f"# canonicalized={'true' if doc.canonicalized else 'false'}\n")
    out.write(f"# n_samples={doc.n_samples}\n")
    out.write(f"# clean={_F17(doc.clean)}\n")
    out.write(f"# average={_F17(doc.average)}\n")
    out.write(f"# worst={_F17(doc.worst)}\n")
    out.write("index,transform,accuracy\n")
    for i, (label, acc) in enumerate(zip(doc.grid, doc.curve)):
        out.write(f"{i},{label},{_F17(float(acc))}\n")
    return out.getvalue()


def read_report(text: str) -> ReportDocument:
    """Parse a report written by write_report, validating structure."""
    meta: dict[str, str] = {}
    rows: list[tuple[int, str, float]] = []
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if not saw_header:
            if line != "index,transform,accuracy":
                raise ValueError(f"line {lineno}: unexpected header {line!r}")
            saw_header = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 columns")
        try:
            rows.append((int(parts[0]), parts[1], float(parts[2])))
        except ValueError:
            raise ValueError(f"line {lineno}: malformed row") from None
    required = ("kind", "mode", "scheme", "canonicalized", "n_samples",
                "clean", "average", "worst")
    missing = [k for k in required if k not in meta]
    if missing:
        raise ValueError(f"missing metadata keys: {', '.join(missing)}")
    if not saw_header:
        raise ValueError("missing column header line")
    for i, (idx, _, _) in enumerate(rows):
        if idx != i:
            raise ValueError(f"row index {idx} out of order (expected {i})")
    if meta["canonicalized"] not in ("true", "false"):
        raise ValueError(f"bad canonicalized flag {meta['canonicalized']!r}")
    return ReportDocument(
        kind=meta["kind"],
        mode=meta["mode"],
        scheme=meta["scheme"],
        canonicalized=meta["canonicalized"] == "true",
        n_samples=int(meta["n_samples"]),
        clean=float(meta["clean"]),
        average=float(meta["average"]),
        worst=float(meta["worst"]),
        grid=tuple(label for _, label, _ in rows),
        curve=np.array([acc for _, _, acc in rows], dtype=float),
    )


# ---------------------------------------------------------------------------
# Model files

_KINDS = ("image", "cloud")
_CANON_MODES = ("off", "train_and_test", "test_only")
_SCHEME_CODES = ("nearest", "bilinear", "bicubic")
_TRAIN_MODES = ("plain", "random_augment", "adversarial", "mixed",
                "adversarial_alp", "adversarial_kl")


def save_model(model) -> bytes:
    """Serialize a linear softmax model to a versioned little-endian blob.

    Layout after the 8-byte magic: kind, canonicalize-mode, scheme and
    training-mode codes (one byte each, scheme 255 when unset), blur
    sigma as f8, the class and feature counts as u32, then row-major f8
    weights and the f8 bias vector.
    """
    if model.kind not in _KINDS:
        raise ValueError(f"unknown model kind {model.kind!r}")
    if model.canonicalize not in _CANON_MODES:
        raise ValueError(f"unknown canonicalize mode {model.canonicalize!r}")
    if model.mode not in _TRAIN_MODES:
        raise ValueError(f"unknown training mode {model.mode!r}")
    scheme_code = 255 if model.scheme is None else _SCHEME_CODES.index(model.scheme)
    W = np.asarray(model.weights, dtype=float)
    b = np.asarray(model.bias, dtype=float)
    if W.ndim != 2 or b.shape != (W.shape[0],):
        raise ValueError("weights must be C x F with a length-C bias")
    head = struct.pack(
        "<8sBBBBd II",
        _MODEL_MAGIC,
        _KINDS.index(model.kind),
        _CANON_MODES.index(model.canonicalize),
        scheme_code,
        _TRAIN_MODES.index(model.mode),
        float(model.sigma),
        W.shape[0],
        W.shape[1],
    )
    return head + W.astype("<f8").tobytes(order="C") + b.astype("<f8").tobytes()


def load_model(data: bytes):
    """Deserialize a model written by save_model; see there for the layout."""
    from .audit import LinearSoftmaxModel  # deferred to avoid an import cycle

    head_fmt = "<8sBBBBd II"
    head_size = struct.calcsize(head_fmt)
    if len(data) < head_size:
        raise ValueError("truncated model file")
    magic, kind_code, canon_code, scheme_code, mode_code, sigma, n_classes, \
        n_features = struct.unpack(head_fmt, data[:head_size])
    if magic != _MODEL_MAGIC:
        raise ValueError(f"bad model magic {magic!r}")
    if kind_code >= len(_KINDS):
        raise ValueError(f"bad model kind code {kind_code}")
    if canon_code >= len(_CANON_MODES):
        raise ValueError(f"bad canonicalize code {canon_code}")
    if scheme_code != 255 and scheme_code >= len(_SCHEME_CODES):
        raise ValueError(f"bad scheme code {scheme_code}")
    if mode_code >= len(_TRAIN_MODES):
        raise ValueError(f"bad training mode code {mode_code}")
    need = head_size + 8 * (n_classes * n_features + n_classes)
    if len(data) != need:
        raise ValueError(f"model file is {len(data)} bytes, expected {need}")
    flat = np.frombuffer(data[head_size:], dtype="<f8")
    W = flat[:n_classes * n_features].reshape(n_classes, n_features).copy()
    b = flat[n_classes * n_features:].copy()
    return LinearSoftmaxModel(
        weights=W,
        bias=b,
        kind=_KINDS[kind_code],
        canonicalize=_CANON_MODES[canon_code],
        scheme=None if scheme_code == 255 else _SCHEME_CODES[scheme_code],
        sigma=sigma,
        mode=_TRAIN_MODES[mode_code],
    )


# ---------------------------------------------------------------------------
# Dataset directories


def save_dataset(data, directory) -> None:
    """Write a labeled dataset as one file per sample plus a manifest.

    Images become PGM files, clouds XYZ files; manifest.csv lists
    filename, numeric label and class name, with kind and seed kept in
    '#' metadata lines.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    lines = [f"# kind={data.kind}", f"# seed={data.seed}",
             "# classes=" + "|".join(data.class_names),
             "filename,label,class_name"]
    ext = "pgm" if data.kind == "image" else "xyz"
    for i, (datum, label) in enumerate(data.samples):
        name = f"sample_{i:05d}.{ext}"
        path = root / name
        if data.kind == "image":
            path.write_bytes(write_pgm(datum, maxval=65535))
        else:
            path.write_text(write_xyz(datum))
        lines.append(f"{name},{label},{data.class_names[label]}")
    (root / "manifest.csv").write_text("\n".join(lines) + "\n")


def load_dataset(directory):
    """Read back a dataset directory written by save_dataset."""
    from .audit import LabeledDataset  # deferred to avoid an import cycle

    root = Path(directory)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise ValueError(f"no manifest.csv under {root}")
    meta: dict[str, str] = {}
    rows: list[tuple[str, int]] = []
    saw_header = False
    for lineno, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if not saw_header:
            if line != "filename,label,class_name":
                raise ValueError(f"manifest line {lineno}: unexpected header")
            saw_header = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"manifest line {lineno}: expected 3 columns")
        rows.append((parts[0], int(parts[1])))
    kind = meta.get("kind")
    if kind not in ("image", "cloud"):
        raise ValueError(f"manifest kind {kind!r} is not 'image' or 'cloud'")
    class_names = tuple(meta.get("classes", "").split("|")) if meta.get("classes") else ()
    samples = []
    for name, label in rows:
        path = root / name
        if not path.is_file():
            raise ValueError(f"manifest references missing file {name}")
        if kind == "image":
            samples.append((read_pgm(path.read_bytes()), label))
        else:
            samples.append((read_xyz(path.read_text()), label))
    return LabeledDataset(kind=kind, samples=tuple(samples),
                          class_names=class_names,
                          seed=int(meta.get("seed", "0")))
