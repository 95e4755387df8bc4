"""Versioned, plain-text model artifacts.

Layout::

    ARDBNN-ARTIFACT <version>
    <one-line JSON header>
    @block <name> <rows> <cols>
    <rows lines of comma-separated %.17g numbers>
    ...
    @end

Numbers are written with 17 significant digits so every float64 round-trips
exactly. The header stores a SHA-256 of the numeric section; a mismatch, an
unknown version or a malformed block raises :class:`ArtifactError`.
"""
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .data import MinMaxScaler
from .estimators import HMCClassifier, LaplaceClassifier
from .exceptions import ArtifactError
from .hmc import ChainDiagnostics, SampleChain
from .laplace import LaplaceFit
from .network import NetworkShape
from .posterior import Hyperparameters, default_ard_grouping, single_class_grouping

MAGIC = "ARDBNN-ARTIFACT"
FORMAT_VERSION = 1
VARIANTS = ("hmc", "hmc-ard", "laplace-ard")


@dataclass(eq=False)
class ModelArtifact:
    """Everything needed to reproduce predictions of a trained variant.

    Attributes
    ----------
    variant : str
        One of ``hmc``, ``hmc-ard``, ``laplace-ard``.
    estimator : HMCClassifier or LaplaceClassifier
        Fitted estimator operating on scaled inputs.
    scaler : MinMaxScaler
        Fitted on the training split only.
    split_seed : int
        Seed of the 70:30 split the model was trained on.
    meta : dict
        Free-form JSON-serialisable provenance (config echo, diagnostics).
    """

    variant: str
    estimator: object
    scaler: MinMaxScaler
    split_seed: int
    meta: dict = field(default_factory=dict)

    @property
    def feature_names(self):
        return self.estimator.feature_names_

    def predict_distribution(self, X_raw):
        """Predictive summary for unscaled feature rows."""
        return self.estimator.predict_distribution(self.scaler.transform(X_raw))


def _blocks_for(art):
    est = art.estimator
    blocks = {
        "scaler_min": art.scaler.data_min_[None, :],
        "scaler_max": art.scaler.data_max_[None, :],
    }
    if isinstance(est, HMCClassifier):
        blocks["weights"] = est.chain_.weights
        blocks["alpha"] = est.chain_.alpha
        blocks["accepted"] = est.chain_.accepted.astype(float)[:, None]
        blocks["hamiltonian_delta"] = est.chain_.hamiltonian_delta[:, None]
        blocks["chain_id"] = est.chain_id_.astype(float)[:, None]
    else:
        fit = est.fit_
        blocks["w_mp"] = fit.w_mp[None, :]
        blocks["curvature"] = fit.curvature
        blocks["alpha"] = fit.hyper.alpha[None, :]
        blocks["gamma"] = fit.gamma_per_class[None, :]
    return blocks


def _format_blocks(blocks):
    buf = io.StringIO()
    for name, arr in blocks.items():
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        buf.write(f"@block {name} {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            buf.write(",".join("%.17g" % v for v in row))
            buf.write("\n")
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def save_artifact(art, path):
    """Write ``art`` to ``path`` atomically (temp file in the same directory, then rename)."""
    if art.variant not in VARIANTS:
        raise ArtifactError(f"unknown variant {art.variant!r}")
    est = art.estimator
    payload = _format_blocks(_blocks_for(art))
    header = {
        "format_version": FORMAT_VERSION,
        "variant": art.variant,
        "estimator": type(est).__name__,
        "params": est.get_params(),
        "n_inputs": est.shape_.n_inputs,
        "n_hidden": est.shape_.n_hidden,
        "ard": bool(est.grouping_.is_ard),
        "feature_names": list(est.feature_names_),
        "classes": est.classes_.tolist(),
        "split_seed": int(art.split_seed),
        "meta": art.meta,
        "payload_sha256": hashlib.sha256(payload.encode()).hexdigest(),
    }
    if isinstance(est, HMCClassifier):
        header["diagnostics"] = est.chain_.diagnostics.as_dict()
        header["chain_diagnostics"] = [d.as_dict() for d in est.diagnostics_]
    else:
        header["n_outer_loops"] = est.fit_.n_outer_loops
        header["converged"] = bool(est.fit_.converged)
        header["grad_norm_at_mp"] = est.fit_.grad_norm_at_mp
        header["beta"] = est.fit_.hyper.beta
    text = (f"{MAGIC} {FORMAT_VERSION}\n"
            + json.dumps(header, default=_json_default, sort_keys=True) + "\n"
            + payload + "@end\n")
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".artifact-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_blocks(lines):
    blocks = {}
    i = 0
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 4 or head[0] != "@block":
            raise ArtifactError(f"malformed block header {lines[i]!r}")
        name = head[1]
        try:
            rows, cols = int(head[2]), int(head[3])
        except ValueError as exc:
            raise ArtifactError(f"bad block size in {lines[i]!r}") from exc
        body = lines[i + 1:i + 1 + rows]
        if len(body) != rows:
            raise ArtifactError(f"block {name!r} is truncated")
        try:
            arr = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float)
        except ValueError as exc:
            raise ArtifactError(f"non-numeric value in block {name!r}") from exc
        arr = arr.reshape(rows, cols) if rows else np.empty((0, cols))
        if arr.shape != (rows, cols):
            raise ArtifactError(f"block {name!r} has shape {arr.shape}, header says {(rows, cols)}")
        blocks[name] = arr
        i += 1 + rows
    return blocks


def load_artifact(path):
    """Read an artifact written by :func:`save_artifact`.

    Raises
    ------
    ArtifactError
        Unknown format or version, checksum mismatch or malformed content.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ArtifactError(f"{path}: not a text artifact") from exc
    lines = text.split("\n")
    first = lines[0].split()
    if len(first) != 2 or first[0] != MAGIC:
        raise ArtifactError(f"{path}: not a model artifact")
    if first[1] != str(FORMAT_VERSION):
        raise ArtifactError(f"{path}: unsupported artifact version {first[1]!r}")
    try:
        header = json.loads(lines[1])
        end = lines.index("@end")
    except (IndexError, ValueError) as exc:
        raise ArtifactError(f"{path}: corrupted header or missing end marker") from exc
    payload = "".join(ln + "\n" for ln in lines[2:end])
    if hashlib.sha256(payload.encode()).hexdigest() != header.get("payload_sha256"):
        raise ArtifactError(f"{path}: checksum mismatch, artifact is corrupted")
    blocks = _parse_blocks(lines[2:end])
    try:
        return _rebuild(header, blocks)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: inconsistent artifact content ({exc})") from exc


def _rebuild(header, blocks):
    variant = header["variant"]
    if variant not in VARIANTS:
        raise ArtifactError(f"unknown variant {variant!r}")
    shape = NetworkShape(int(header["n_inputs"]), int(header["n_hidden"]))
    names = tuple(header["feature_names"])
    grouping = default_ard_grouping(shape, names) if header["ard"] else single_class_grouping(shape)
    cls = HMCClassifier if header["estimator"] == "HMCClassifier" else LaplaceClassifier
    est = cls(**header["params"])
    est.shape_ = shape
    est.grouping_ = grouping
    est.feature_names_ = names
    est.n_features_in_ = shape.n_inputs
    est.classes_ = np.asarray(header["classes"])
    if cls is HMCClassifier:
        diag = ChainDiagnostics(**{k: v for k, v in header["diagnostics"].items()
                                   if k != "acceptance_rate"})
        est.diagnostics_ = [
            ChainDiagnostics(**{k: v for k, v in d.items() if k != "acceptance_rate"})
            for d in header["chain_diagnostics"]
        ]
        est.chain_ = SampleChain(blocks["weights"], blocks["alpha"],
                                 blocks["accepted"][:, 0].astype(bool),
                                 blocks["hamiltonian_delta"][:, 0], diag)
        est.chain_id_ = blocks["chain_id"][:, 0].astype(int)
        if blocks["weights"].shape[1:] != (shape.n_params,):
            raise ValueError("weights do not match the network shape")
    else:
        est.fit_ = LaplaceFit(
            blocks["w_mp"][0], blocks["curvature"],
            Hyperparameters(blocks["alpha"][0], header["beta"]),
            header["grad_norm_at_mp"], blocks["gamma"][0],
            header["n_outer_loops"], header["converged"],
        )
        if est.fit_.curvature.shape != (shape.n_params, shape.n_params):
            raise ValueError("curvature does not match the network shape")
    scaler = MinMaxScaler()
    scaler.data_min_ = blocks["scaler_min"][0]
    scaler.data_max_ = blocks["scaler_max"][0]
    scaler.n_features_in_ = scaler.data_min_.size
    return ModelArtifact(variant, est, scaler, int(header["split_seed"]), header.get("meta", {}))
