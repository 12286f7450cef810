"""JSON channel and report files.

A channel file looks like::

    {
      "format_version": "1",
      "n": 2,
      "time_grid": [0.0, 0.1, ...],
      "F_sequence": [[[...], ...], ...],      # or "kraus_sequence" / "generator_spec"
      "metadata": {"key": "value"}
    }

Complex numbers are ``[re, im]`` pairs; matrices are row-major nested lists.
A Kraus sequence holds, per time point, a list of
``{"sign": +1 or -1, "operator": <complex matrix>}``. ``choi_sequence`` (a list
of complex matrices) is accepted as an additional payload.

Generator specs are objects with a ``"type"`` key:

``"lindblad"``
    ``"hamiltonian"`` (complex matrix, optional) and ``"jumps"``, a list of
    ``{"operator": <complex matrix>, "rate": <number or expression in t>}``.
``"pauli_rates"``
    ``"rates": [g1, g2, g3]`` (numbers or expressions), qubits only.
``"tabulated"``
    ``"times"`` and ``"L_sequence"`` (real matrices).
``"choi_form"``
    ``"R"``, a constant complex matrix.

Rate expressions are arithmetic in ``t`` using ``pi``, ``e`` and the
functions listed in ``EXPRESSION_FUNCTIONS``.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .generators import ChoiFormGenerator, GeneratorSpec, LindbladGenerator, TabulatedGenerator
from .superop import KrausDecomposition

FORMAT_VERSION = "1"
PAYLOAD_KEYS = ("F_sequence", "kraus_sequence", "generator_spec", "choi_sequence")

EXPRESSION_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
)


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def encode_complex(M) -> list:
    M = np.asarray(M, dtype=complex)
    return np.stack([M.real, M.imag], axis=-1).tolist()


def decode_complex(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.shape[-1] != 2:
        raise InputError("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def encode_real(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def rate_function(expr: str):
    """Compile a rate expression in ``t`` after whitelisting its syntax."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"bad rate expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise InputError(f"disallowed syntax in rate expression {expr!r}")
        if isinstance(node, ast.Name) and node.id != "t" and node.id not in EXPRESSION_FUNCTIONS and node.id not in _CONSTANTS:
            raise InputError(f"unknown name {node.id!r} in rate expression")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise InputError(f"disallowed call in rate expression {expr!r}")
    code = compile(tree, "<rate>", "eval")
    namespace = {"__builtins__": {}, **EXPRESSION_FUNCTIONS, **_CONSTANTS}
    return lambda t: float(eval(code, namespace, {"t": t}))


def _rate(value):
    if isinstance(value, str):
        return rate_function(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise InputError(f"rate must be a number or an expression string, got {value!r}")


def parse_generator_spec(data: dict, n: int) -> GeneratorSpec:
    from .qubit import pauli_rates_generator

    if not isinstance(data, dict) or "type" not in data:
        raise InputError("generator_spec must be an object with a 'type'")
    kind = data["type"]
    try:
        if kind == "lindblad":
            H = data.get("hamiltonian")
            H = None if H is None else decode_complex(H)
            jumps = [(decode_complex(j["operator"]), _rate(j["rate"])) for j in data.get("jumps", [])]
            return LindbladGenerator(n, H, jumps)
        if kind == "pauli_rates":
            if n != 2:
                raise InputError("pauli_rates requires n = 2")
            rates = data["rates"]
            if len(rates) != 3:
                raise InputError("pauli_rates needs three rates")
            return pauli_rates_generator(*(_rate(r) for r in rates))
        if kind == "tabulated":
            spec = TabulatedGenerator(data["times"], data["L_sequence"])
            if spec.matrices.shape[1:] != (n * n, n * n):
                raise InputError("L_sequence matrices must be n^2 x n^2")
            return spec
        if kind == "choi_form":
            R = decode_complex(data["R"])
            if R.shape != (n * n, n * n):
                raise InputError("R must be n^2 x n^2")
            return ChoiFormGenerator(n, R)
    except KeyError as exc:
        raise InputError(f"generator_spec of type {kind!r} is missing {exc}") from None
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    raise InputError(f"unknown generator_spec type {kind!r}")


@dataclass
class ChannelFile:
    n: int
    time_grid: list[float]
    payload_kind: str
    payload: Any
    metadata: dict[str, str] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        if self.payload_kind not in PAYLOAD_KEYS:
            raise InputError(f"unknown payload kind {self.payload_kind!r}")
        self.time_grid = [float(t) for t in self.time_grid]
        if any(b <= a for a, b in zip(self.time_grid, self.time_grid[1:])):
            raise InputError("time_grid must be strictly increasing")
        if int(self.n) != self.n or self.n < 2:
            raise InputError(f"n must be an integer >= 2, got {self.n!r}")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    # -- constructors -------------------------------------------------
    @classmethod
    def from_transfer(cls, times, F, metadata=None):
        F = np.asarray(F, dtype=float)
        n = int(round(np.sqrt(F.shape[1])))
        return cls(n, list(times), "F_sequence", [encode_real(f) for f in F], metadata or {})

    @classmethod
    def from_kraus(cls, times, decompositions, metadata=None):
        payload = [
            [{"sign": s, "operator": encode_complex(A)} for s, A in zip(K.signs, K.operators)]
            for K in decompositions
        ]
        return cls(decompositions[0].dim, list(times), "kraus_sequence", payload, metadata or {})

    @classmethod
    def from_choi(cls, times, S, metadata=None):
        S = np.asarray(S)
        n = int(round(np.sqrt(S.shape[1])))
        return cls(n, list(times), "choi_sequence", [encode_complex(s) for s in S], metadata or {})

    # -- decoders ------------------------------------------------------
    def transfer_matrices(self) -> np.ndarray:
        self._expect("F_sequence")
        F = np.asarray(self.payload, dtype=float)
        self._check_sequence(F, (self.n ** 2, self.n ** 2))
        return F

    def kraus_decompositions(self) -> list[KrausDecomposition]:
        self._expect("kraus_sequence")
        if len(self.payload) != len(self.time_grid):
            raise InputError("need one Kraus set per time point")
        out = []
        for entry in self.payload:
            try:
                ops = [decode_complex(k["operator"]) for k in entry]
                signs = [int(k.get("sign", 1)) for k in entry]
                K = KrausDecomposition(ops, signs)
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"bad Kraus entry: {exc}") from None
            if not K.operators or any(A.shape != (self.n, self.n) for A in K.operators):
                raise InputError("Kraus operators must be n x n")
            out.append(K)
        return out

    def choi_matrices(self) -> np.ndarray:
        self._expect("choi_sequence")
        S = decode_complex(self.payload)
        self._check_sequence(S, (self.n ** 2, self.n ** 2))
        return S

    def generator(self) -> GeneratorSpec:
        self._expect("generator_spec")
        return parse_generator_spec(self.payload, self.n)

    def _expect(self, kind):
        if self.payload_kind != kind:
            raise InputError(f"expected a {kind} payload, found {self.payload_kind}")

    def _check_sequence(self, arr, shape):
        if arr.ndim != 3 or arr.shape[1:] != shape or len(arr) != len(self.time_grid):
            raise InputError(f"payload must hold {len(self.time_grid)} matrices of shape {shape}")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "n": self.n,
            "time_grid": self.time_grid,
            self.payload_kind: self.payload,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelFile":
        if not isinstance(data, dict):
            raise InputError("channel file must be a JSON object")
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported format_version {version!r}")
        kinds = [k for k in PAYLOAD_KEYS if k in data]
        if len(kinds) != 1:
            raise InputError(f"exactly one payload expected, found {kinds or 'none'}")
        try:
            return cls(
                n=data["n"],
                time_grid=data.get("time_grid", []),
                payload_kind=kinds[0],
                payload=data[kinds[0]],
                metadata=data.get("metadata", {}),
                format_version=version,
            )
        except KeyError as exc:
            raise InputError(f"missing field {exc}") from None


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def write_json(obj: dict, path) -> None:
    Path(path).write_text(dumps(obj))


def write_channel_file(cf: ChannelFile, path) -> None:
    write_json(cf.to_dict(), path)


def read_channel_file(path) -> ChannelFile:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return ChannelFile.from_dict(data)


def report_dict(records: list[dict], summary: dict, metadata: dict) -> dict:
    """Report file layout: one record per grid point plus a summary."""
    return {
        "format_version": FORMAT_VERSION,
        "records": records,
        "summary": summary,
        "metadata": {str(k): str(v) for k, v in metadata.items()},
    }
