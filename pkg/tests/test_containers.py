import numpy as np
import pytest

from evoquant.containers import (
    load_quantized_model,
    quantized_model_bytes,
    save_quantized_model,
    sniff_container,
)
from evoquant.quantizer import ExemptionRules, apply_policy, encode_payload, quantize_tensor
from evoquant.tensors import FloatModel, QuantizedModel, WeightTensor


def sample_float_model(n=600, cells=2, seed=0):
    rng = np.random.default_rng(seed)
    tensors = [
        WeightTensor(f"cell{j}.w", (n,), rng.standard_normal(n), j) for j in range(cells)
    ]
    tensors.append(WeightTensor("stem.w", (8,), rng.standard_normal(8), None))
    return FloatModel(tensors, {"origin": "test"})


class TestQuantizedModel:
    def test_requires_encoded_payload(self):
        qt = quantize_tensor(WeightTensor("w", (4,), np.arange(4.0)), 4, 4)
        with pytest.raises(ValueError, match="payload"):
            QuantizedModel([qt])

    def test_name_clash_rejected(self):
        qt, _ = encode_payload(quantize_tensor(WeightTensor("w", (4,), np.arange(4.0)), 4, 4))
        with pytest.raises(ValueError, match="both"):
            QuantizedModel([qt], [WeightTensor("w", (2,), np.ones(2))])

    def test_total_bits_sums_payload_and_exempt(self):
        qt, _ = encode_payload(quantize_tensor(WeightTensor("w", (4,), np.arange(4.0)), 4, 4))
        exempt = WeightTensor("e", (3,), np.ones(3))
        m = QuantizedModel([qt], [exempt], float_width_bits=32)
        assert m.total_bits == qt.codec_payload.bit_count + 3 * 32


class TestQuantizedContainer:
    def test_round_trip(self):
        model = sample_float_model()
        qm = apply_policy(model, [8, 4])
        data = quantized_model_bytes(qm)
        qm2 = load_quantized_model(data)
        assert len(qm2.tensors) == 2 and len(qm2.exempt_tensors) == 1
        for a, b in zip(qm.tensors, qm2.tensors):
            assert a.name == b.name and a.shape == b.shape
            assert a.bit_width == b.bit_width and a.bucket_size == b.bucket_size
            assert a.scales == b.scales
            assert np.array_equal(a.codes, b.codes)
            assert a.codec_payload == b.codec_payload
        assert qm2.exempt_tensors[0] == qm.exempt_tensors[0]
        assert qm2.metadata == qm.metadata
        assert qm2.total_bits == qm.total_bits

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="bad magic"):
            load_quantized_model(b"WHAT" + b"\x00" * 16)

    def test_truncated(self):
        data = quantized_model_bytes(apply_policy(sample_float_model(), [8, 8]))
        with pytest.raises(ValueError, match="truncated"):
            load_quantized_model(data[:-20])

    def test_sniff(self, tmp_path):
        from evoquant.containers import save_float_model

        fpath = tmp_path / "m.jsqw"
        qpath = tmp_path / "m.jsqq"
        model = sample_float_model()
        save_float_model(model, fpath)
        save_quantized_model(apply_policy(model, [4, 4]), qpath)
        assert sniff_container(fpath) == "float"
        assert sniff_container(qpath) == "quantized"
        with pytest.raises(ValueError, match="bad magic"):
            sniff_container(b"....")

    def test_exemption_rules_respected(self):
        model = sample_float_model()
        qm = apply_policy(model, [8, 8], exemptions=ExemptionRules(cells=frozenset({1})))
        assert [t.name for t in qm.tensors] == ["cell0.w"]
        assert sorted(t.name for t in qm.exempt_tensors) == ["cell1.w", "stem.w"]
        back = load_quantized_model(quantized_model_bytes(qm))
        tags = {t.name: t.cell_index for t in back.exempt_tensors}
        assert tags == {"cell1.w": 1, "stem.w": None}

    def test_policy_length_mismatch(self):
        with pytest.raises(ValueError, match="policy length mismatch"):
            apply_policy(sample_float_model(), [8])

    def test_sixteen_bit_alphabet_survives_round_trip(self):
        rng = np.random.default_rng(4)
        model = FloatModel([WeightTensor("cell0.w", (512,), rng.standard_normal(512), 0)])
        qm = apply_policy(model, [16], bucket_size=256)
        qm2 = load_quantized_model(quantized_model_bytes(qm))
        assert np.array_equal(qm.tensors[0].codes, qm2.tensors[0].codes)
        assert qm.tensors[0].codes.max() == 1 << 16
