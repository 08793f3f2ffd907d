"""Plain-text file formats: ``.covop`` operators, coefficient directories, CSV helpers.

Every float is written with 17 significant digits so files round-trip exactly
and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .laurent import DecayConstants, LaurentCoefficients
from .operators import (
    DenseOperator,
    VarianceProfileOperator,
    filtered_gaussian_operator,
    wigner_operator,
)

COVOP_MAGIC = "# mdeseries covariance operator v1"


def fmt(v) -> str:
    """17-significant-digit text for real or complex scalars."""
    if isinstance(v, (complex, np.complexfloating)):
        v = complex(v)
        if v.imag == 0:
            return format(v.real, ".17g")
        return f"{v.real:.17g}{v.imag:+.17g}j"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def parse_scalar(text: str):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        try:
            return complex(text)
        except ValueError as exc:
            raise ValidationError(f"cannot parse number {text!r}") from exc


# --- operators -------------------------------------------------------------

_PARAM_KEYS = {
    "wigner": {"N"},
    "filtered_gaussian": {"N", "kernel_scale", "amplitude", "decay_scale"},
    "dense": {"N", "decay_scale", "positivity_preserving"},
    "variance_profile": {"N", "decay_scale"},
}


def serialize_operator(S) -> str:
    kind = S.kind
    if kind not in _PARAM_KEYS:
        kind = "dense"
    header = {"kind": kind, "N": S.n}
    if kind == "filtered_gaussian":
        header.update({k: S.params[k] for k in ("kernel_scale", "amplitude", "decay_scale")})
    elif kind in ("dense", "variance_profile") and S.decay_scale is not None:
        header["decay_scale"] = S.decay_scale
    if kind == "dense":
        header["positivity_preserving"] = bool(S.positivity_preserving)
    lines = [COVOP_MAGIC] + [f"{k} = {fmt(v) if not isinstance(v, str) else v}" for k, v in header.items()]
    if kind == "dense":
        lines.append("entries")
        lines.extend(fmt(v) for v in S.dense().ravel())
    elif kind == "variance_profile":
        lines.append("variances")
        lines.extend(fmt(v) for v in S.variances.ravel())
    return "\n".join(lines) + "\n"


def fingerprint_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def operator_fingerprint(S) -> str:
    return fingerprint_text(serialize_operator(S))


def parse_operator(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != COVOP_MAGIC:
        raise ValidationError("not a covariance operator file (missing header line)")
    header, body, i = {}, [], 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line in ("entries", "variances"):
            body = lines[i:]
            break
        if "=" not in line:
            raise ValidationError(f"malformed header line {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        header[key] = value
    kind = header.pop("kind", None)
    if kind not in _PARAM_KEYS:
        raise ValidationError(f"unknown operator kind {kind!r}")
    unknown = set(header) - _PARAM_KEYS[kind]
    if unknown:
        raise ValidationError(f"unknown keys for {kind}: {sorted(unknown)}")
    try:
        n = int(header["N"])
    except (KeyError, ValueError) as exc:
        raise ValidationError("operator file needs an integer N") from exc
    decay = float(header["decay_scale"]) if "decay_scale" in header else None
    if kind == "wigner":
        return wigner_operator(n)
    if kind == "filtered_gaussian":
        try:
            return filtered_gaussian_operator(n, float(header["kernel_scale"]), float(header["amplitude"]), decay)
        except KeyError as exc:
            raise ValidationError(f"missing parameter {exc}") from exc
    values = np.array([parse_scalar(v) for v in body if v.strip()])
    if kind == "variance_profile":
        if values.size != n * n:
            raise ValidationError(f"expected {n * n} variances, got {values.size}")
        return VarianceProfileOperator(values.real.reshape(n, n), decay_scale=decay)
    if values.size != n**4:
        raise ValidationError(f"expected {n**4} entries, got {values.size}")
    positive = header.get("positivity_preserving", "false") == "true"
    return DenseOperator(values.reshape((n,) * 4), decay_scale=decay, positivity_preserving=positive)


def write_operator(path, S) -> str:
    text = serialize_operator(S)
    Path(path).write_text(text)
    return fingerprint_text(text)


def read_operator(path):
    """Load a ``.covop`` file; returns ``(operator, fingerprint)``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read operator file {path}: {exc}") from exc
    return parse_operator(text), fingerprint_text(text)


# --- matrices and coefficient directories ----------------------------------


def write_matrix(path, M) -> None:
    M = np.asarray(M)
    is_complex = np.iscomplexobj(M) and np.any(M.imag != 0)
    rows = [f"# shape {M.shape[0]} {M.shape[1]} {'complex' if is_complex else 'real'}"]
    for row in M:
        rows.append(" ".join(fmt(v if is_complex else np.real(v)) for v in row))
    Path(path).write_text("\n".join(rows) + "\n")


def read_matrix(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[:2] != ["#", "shape"]:
        raise ValidationError(f"{path}: missing shape header")
    n, m, dtype = int(head[2]), int(head[3]), head[4]
    data = [[parse_scalar(v) for v in line.split()] for line in lines[1:] if line.strip()]
    M = np.array(data, dtype=complex if dtype == "complex" else float)
    if M.shape != (n, m):
        raise ValidationError(f"{path}: shape mismatch")
    return M


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


def dump_json(path, obj) -> None:
    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return str(o)
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    Path(path).write_text(json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")


def write_coefficients(directory, lc: LaurentCoefficients) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, C in enumerate(lc.coeffs):
        name = f"C_{k:02d}.txt"
        write_matrix(directory / name, C)
        files.append(name)
    manifest = {
        "fingerprint": lc.fingerprint,
        "K_max": lc.K_max,
        "l": fmt(lc.l),
        "eps": fmt(lc.eps),
        "c_l_eps": fmt(lc.constants.c_l_eps),
        "c": fmt(lc.constants.c),
        "R": fmt(lc.constants.R),
        "spectral_base": None if lc.spectral_base is None else fmt(lc.spectral_base),
        "norms": [fmt(v) for v in lc.norms],
        "bounds": [fmt(v) for v in lc.bounds],
        "files": files,
    }
    dump_json(directory / "manifest.json", manifest)


def read_coefficients(directory) -> LaurentCoefficients:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read coefficient manifest in {directory}: {exc}") from exc
    coeffs = [read_matrix(directory / f) for f in manifest["files"]]
    consts = DecayConstants(
        l=float(manifest["l"]), eps=float(manifest["eps"]), c_l_eps=float(manifest["c_l_eps"]),
        c=float(manifest["c"]), R=float(manifest["R"]),
    )
    sb = manifest.get("spectral_base")
    return LaurentCoefficients(
        fingerprint=manifest["fingerprint"], l=consts.l, eps=consts.eps, constants=consts, coeffs=coeffs,
        norms=[float(v) for v in manifest["norms"]], bounds=[float(v) for v in manifest["bounds"]],
        spectral_base=None if sb is None else float(sb),
    )


def read_manifest_fingerprint(directory):
    path = Path(directory) / "manifest.json"
    if not path.exists():
        return None
    return json.loads(path.read_text()).get("fingerprint")


# --- CSV -----------------------------------------------------------------------


def write_csv(path, header, rows, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path):
    """Returns ``(comments, header, rows)`` with rows as lists of strings."""
    comments, data = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                comments.append(line[2:].rstrip("\n"))
            else:
                data.append(line)
    reader = list(csv.reader(data))
    return comments, reader[0], reader[1:]


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
