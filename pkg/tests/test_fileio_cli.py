import json
import subprocess
import sys

import numpy as np
import pytest

from meqkraus.cli import main
from meqkraus.fileio import (
    ChannelFile,
    InputError,
    decode_complex,
    dumps,
    encode_complex,
    rate_function,
    read_channel_file,
    write_channel_file,
)
from meqkraus.qubit import DecoherencePair, min_dec_kraus, min_dec_transfer, pauli_rates_generator
from meqkraus.superop import choi_to_kraus, transfer_to_choi


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def pauli_file(tmp_path, rates, t_final=1.0, steps=10):
    return write(
        tmp_path / "spec.json",
        {
            "format_version": "1",
            "n": 2,
            "time_grid": list(np.linspace(0, t_final, steps + 1)),
            "generator_spec": {"type": "pauli_rates", "rates": rates},
            "metadata": {},
        },
    )


def load(path):
    return json.loads(path.read_text())


# --- encoding --------------------------------------------------------------------------


def test_complex_encoding_round_trip(rng):
    M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(decode_complex(encode_complex(M)), M)
    assert encode_complex(np.array([1 + 2j])) == [[1.0, 2.0]]


def test_decode_rejects_bad_pairs():
    with pytest.raises(InputError):
        decode_complex([[1.0, 2.0, 3.0]])


@pytest.mark.parametrize(
    "expr, t, value",
    [("sin(t)**2", 0.5, np.sin(0.5) ** 2), ("-exp(-t) + 0.2", 1.0, 0.2 - np.exp(-1)), ("2*pi", 0.0, 2 * np.pi)],
)
def test_rate_expressions(expr, t, value):
    assert np.isclose(rate_function(expr)(t), value)


@pytest.mark.parametrize("expr", ["__import__('os')", "t.real", "open('x')", "lambda: 1", "x + 1", "t +"])
def test_rate_expression_whitelist(expr):
    with pytest.raises(InputError):
        rate_function(expr)


# --- channel files ------------------------------------------------------------------------


def _channel_files(rng):
    pair = DecoherencePair(lambda t: np.exp((-0.3 + 0.5j) * t))
    times = [0.0, 0.5, 1.0]
    F = [min_dec_transfer(pair, t) for t in times]
    return [
        ChannelFile.from_transfer(times, F, {"origin": "test"}),
        ChannelFile.from_kraus(times, [min_dec_kraus(pair, t) for t in times]),
        ChannelFile.from_choi(times, [transfer_to_choi(f) for f in F]),
        ChannelFile(2, times, "generator_spec", {"type": "pauli_rates", "rates": [0.1, "sin(t)", 0.3]}),
        ChannelFile(
            2,
            [],
            "generator_spec",
            {"type": "lindblad", "hamiltonian": encode_complex(np.diag([0.5, -0.5])), "jumps": [{"operator": encode_complex([[0, 1], [0, 0]]), "rate": 0.25}]},
        ),
    ]


def test_write_read_write_byte_identical(tmp_path, rng):
    for i, cf in enumerate(_channel_files(rng)):
        a, b = tmp_path / f"a{i}.json", tmp_path / f"b{i}.json"
        write_channel_file(cf, a)
        write_channel_file(read_channel_file(a), b)
        assert a.read_bytes() == b.read_bytes()


def test_field_names(tmp_path, rng):
    cf = _channel_files(rng)[0]
    data = json.loads(dumps(cf.to_dict()))
    assert set(data) == {"format_version", "n", "time_grid", "F_sequence", "metadata"}
    assert data["format_version"] == "1"


def test_decoded_payloads(rng):
    files = _channel_files(rng)
    F = files[0].transfer_matrices()
    K = files[1].kraus_decompositions()
    assert np.allclose(K[1].apply(np.eye(2) / 2), K[1].apply(np.eye(2) / 2).conj().T)
    assert np.allclose(files[2].choi_matrices()[2], transfer_to_choi(F[2]))
    assert files[3].generator().time_dependent


@pytest.mark.parametrize(
    "data, match",
    [
        ({"format_version": "2", "n": 2, "F_sequence": []}, "format_version"),
        ({"format_version": "1", "n": 2, "time_grid": [0, 1]}, "payload"),
        ({"format_version": "1", "n": 2, "time_grid": [1, 0], "F_sequence": []}, "increasing"),
        ({"format_version": "1", "n": 1, "F_sequence": []}, "n must"),
        ({"format_version": "1", "time_grid": [], "F_sequence": []}, "missing"),
    ],
)
def test_malformed_files(data, match):
    with pytest.raises(InputError, match=match):
        ChannelFile.from_dict(data)


def test_payload_dimension_checked():
    cf = ChannelFile(2, [0.0, 1.0], "F_sequence", [np.eye(9).tolist()] * 2)
    with pytest.raises(InputError, match="shape"):
        cf.transfer_matrices()


def test_unknown_generator_type():
    cf = ChannelFile(2, [], "generator_spec", {"type": "memory_kernel"})
    with pytest.raises(InputError, match="unknown"):
        cf.generator()


# --- CLI ------------------------------------------------------------------------------------


def test_meq2kraus_pure_dephasing(tmp_path):
    src = pauli_file(tmp_path, [0, 0, 1])
    out = tmp_path / "out"
    assert main(["meq2kraus", src, "--t-final", "1", "--steps", "10", "--method", "exact-expm", "-o", str(out)]) == 0
    cf = read_channel_file(out / "kraus.json")
    K = cf.kraus_decompositions()[-1]
    assert K.signs == [1, 1]
    e = np.exp(-1)
    # compare channel action rather than operators (unitary freedom)
    ref = [np.sqrt((1 + e) / 2) * np.eye(2), np.sqrt((1 - e) / 2) * np.diag([-1, 1])]
    rho = np.array([[0.6, 0.2 - 0.1j], [0.2 + 0.1j, 0.4]])
    assert np.allclose(K.apply(rho), sum(A @ rho @ A.conj().T for A in ref), atol=1e-12)
    assert sorted(np.linalg.norm(A) ** 2 for A in K.operators) == pytest.approx(sorted([1 - e, 1 + e]))
    report = load(out / "report.json")
    assert len(report["records"]) == 11
    assert all(r["cp"] for r in report["records"])
    assert (out / "choi.json").exists() and (out / "transfer.json").exists()


def test_meq2kraus_zero_generator(tmp_path):
    src = pauli_file(tmp_path, [0, 0, 0])
    out = tmp_path / "out"
    assert main(["meq2kraus", src, "-o", str(out), "--emit", "kraus"]) == 0
    for K in read_channel_file(out / "kraus.json").kraus_decompositions():
        assert len(K) == 1
        A = K.operators[0]
        assert np.allclose(A / (A[0, 0] / abs(A[0, 0])), np.eye(2))
    assert not (out / "choi.json").exists()


def test_meq2kraus_flags_polytope_exit(tmp_path):
    # a transiently negative dephasing rate pushes Gamma out of the CP polytope
    src = pauli_file(tmp_path, [1, 1, "-2*exp(-t)"], t_final=3.0, steps=30)
    out = tmp_path / "out"
    assert main(["meq2kraus", src, "-o", str(out)]) == 0
    records = load(out / "report.json")["records"]
    flagged = [r for r in records if not r["cp"]]
    assert flagged and len(flagged) < len(records)
    for r in records:
        negatives = r["epsilon_signs"].count(-1)
        assert negatives == (0 if r["cp"] else 1)
    assert main(["meq2kraus", src, "-o", str(out), "--require-cp"]) == 2


def test_map2meq_amplitude_damping(tmp_path):
    pair = DecoherencePair(lambda t: np.exp(-t / 2))
    times = np.linspace(0, 1, 1001)
    src = tmp_path / "F.json"
    write_channel_file(ChannelFile.from_transfer(times, [min_dec_transfer(pair, t) for t in times]), src)
    out = tmp_path / "out"
    assert main(["map2meq", str(src), "-o", str(out), "--emit-family"]) == 0
    report = load(out / "report.json")
    assert report["summary"]["exactness"] is True
    gen = read_channel_file(out / "generator.json")
    L = np.asarray(gen.payload["L_sequence"])
    expected = np.diag([0, -0.5, -0.5, -1.0])
    expected[3, 0] = -1.0
    assert np.abs(L[1:-1] - expected).max() < 1e-6
    assert "R_sequence" in gen.payload
    assert (out / "family.json").exists()


def test_map2meq_cos_squared(tmp_path):
    steps = 400
    times = np.linspace(0, np.pi, steps + 1)
    pair = DecoherencePair(lambda t: np.cos(t) ** 2)
    src = tmp_path / "F.json"
    write_channel_file(ChannelFile.from_transfer(times, [min_dec_transfer(pair, t) for t in times]), src)
    out = tmp_path / "out"
    assert main(["map2meq", str(src), "-o", str(out)]) == 0
    summary = load(out / "report.json")["summary"]
    assert summary["exactness"] is False and summary["label"] == "best-possible"
    assert summary["kernel_monotone"] is False
    assert abs(summary["first_violation_time"] - np.pi / 2) <= np.pi / steps + 1e-12
    rec = load(out / "report.json")["records"][steps // 2]
    assert rec["kernel_dim"] == 3 and rec["residual"] < 1e-8
    assert main(["map2meq", str(src), "-o", str(out), "--require-exact"]) == 2


def test_map2meq_identity(tmp_path):
    src = tmp_path / "F.json"
    write_channel_file(ChannelFile.from_transfer([0, 1, 2], [np.eye(4)] * 3), src)
    out = tmp_path / "out"
    assert main(["map2meq", str(src), "-o", str(out)]) == 0
    L = np.asarray(read_channel_file(out / "generator.json").payload["L_sequence"])
    assert not L.any()
    assert load(out / "report.json")["summary"]["exactness"] is True


def test_map2meq_nan_exit_3(tmp_path, capsys):
    F = [np.eye(4).tolist()] * 3
    F[1] = np.where(np.eye(4) > 0, np.nan, 0).tolist()
    src = tmp_path / "F.json"
    src.write_text(json.dumps({"format_version": "1", "n": 2, "time_grid": [0, 1, 2], "F_sequence": F, "metadata": {}}))
    assert main(["map2meq", str(src), "-o", str(tmp_path / "out")]) == 3
    assert "phi-dot undefined" in capsys.readouterr().err


def test_check_cp_exit_codes(tmp_path, capsys):
    ok = tmp_path / "id.json"
    write_channel_file(ChannelFile.from_transfer([0.0], [np.eye(4)]), ok)
    assert main(["check-cp", str(ok)]) == 0
    line = capsys.readouterr().out.strip().split("\t")
    assert abs(float(line[1])) < 1e-12

    bad = tmp_path / "bad.json"
    write_channel_file(ChannelFile.from_transfer([0.0], [np.diag([1, 0.9, 0.9, 0.0])]), bad)
    assert main(["check-cp", str(bad)]) == 2
    assert float(capsys.readouterr().out.split("\t")[1]) == pytest.approx(-0.4, abs=1e-12)


def test_check_cp_intermediate_recoherence(tmp_path):
    pair = DecoherencePair(lambda t: np.cos(t) ** 2)
    times = [2.0, 2.8]
    src = tmp_path / "F.json"
    write_channel_file(ChannelFile.from_transfer(times, [min_dec_transfer(pair, t) for t in times]), src)
    assert main(["check-cp", str(src)]) == 0
    assert main(["check-cp", str(src), "--intermediate"]) == 2


def test_check_cp_kraus_payload(tmp_path):
    S = transfer_to_choi(np.diag([1, 0.9, 0.9, 0.0]))
    src = tmp_path / "K.json"
    write_channel_file(ChannelFile.from_kraus([0.0], [choi_to_kraus(S)]), src)
    assert main(["check-cp", str(src)]) == 2


@pytest.mark.parametrize(
    "content",
    ["not json", json.dumps({"format_version": "1", "n": 2, "generator_spec": {"type": "pauli_rates", "rates": [1, 2]}})],
)
def test_malformed_input_exit_1(tmp_path, content, capsys):
    src = tmp_path / "x.json"
    src.write_text(content)
    assert main(["meq2kraus", str(src), "--t-final", "1", "--steps", "3", "-o", str(tmp_path / "o")]) == 1
    assert "input error" in capsys.readouterr().err


def test_missing_grid_is_input_error(tmp_path):
    src = write(tmp_path / "s.json", {"format_version": "1", "n": 2, "generator_spec": {"type": "pauli_rates", "rates": [0, 0, 1]}})
    assert main(["propagate", src, "-o", str(tmp_path / "F.json")]) == 1


def test_exact_expm_on_time_dependent_is_input_error(tmp_path):
    src = pauli_file(tmp_path, [0, 0, "sin(t)"])
    assert main(["propagate", src, "--method", "exact-expm", "-o", str(tmp_path / "F.json")]) == 1


def test_pipeline_meq2kraus_into_map2meq(tmp_path):
    g = (0.2, 0.5, 0.9)
    src = pauli_file(tmp_path, list(g), t_final=1.0, steps=1000)
    mid = tmp_path / "mid"
    assert main(["meq2kraus", src, "--method", "exact-expm", "-o", str(mid), "--emit", "kraus"]) == 0
    out = tmp_path / "out"
    assert main(["map2meq", str(mid / "kraus.json"), "-o", str(out)]) == 0
    L = np.asarray(read_channel_file(out / "generator.json").payload["L_sequence"])
    expected = np.diag([0, -g[1] - g[2], -g[0] - g[2], -g[0] - g[1]])
    assert np.abs(L[1:-1] - expected).max() < 1e-6
    assert load(out / "report.json")["summary"]["exactness"] is True


def test_propagate_and_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("MEQKRAUS_THREADS", "3")
    src = pauli_file(tmp_path, [0.1, 0.2, 0.3], steps=20)
    dst = tmp_path / "F.json"
    assert main(["propagate", src, "-o", str(dst)]) == 0
    F = read_channel_file(dst).transfer_matrices()
    assert np.allclose(F[-1], np.diag([1, np.exp(-0.5), np.exp(-0.4), np.exp(-0.3)]), atol=1e-10)
    out = tmp_path / "out"
    assert main(["meq2kraus", src, "-o", str(out)]) == 0
    monkeypatch.setenv("MEQKRAUS_THREADS", "1")
    out1 = tmp_path / "out1"
    assert main(["meq2kraus", src, "-o", str(out1)]) == 0
    assert (out / "kraus.json").read_bytes().replace(str(src).encode(), b"") == (out1 / "kraus.json").read_bytes().replace(str(src).encode(), b"")


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "meqkraus.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("meq2kraus", "map2meq", "check-cp", "propagate"):
        assert cmd in res.stdout


def test_pauli_rates_spec_matches_library():
    cf = ChannelFile(2, [], "generator_spec", {"type": "pauli_rates", "rates": [0.1, 0.2, 0.3]})
    from meqkraus import build_basis, generator_to_matrix

    a = generator_to_matrix(cf.generator(), build_basis(2))
    b = generator_to_matrix(pauli_rates_generator(0.1, 0.2, 0.3), build_basis(2))
    assert np.array_equal(a, b)
