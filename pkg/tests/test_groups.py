from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from privess import groups
from conftest import naive_mod_exp


class TestTinyProfile:
    def test_fixed_override_generators_have_order_11(self, tiny):
        # Direct modular-exponentiation oracle, not pow().
        assert naive_mod_exp(4, 11, 23) == 1
        assert naive_mod_exp(9, 11, 23) == 1
        assert tiny.gen_g == 4 and tiny.gen_h == 9
        for k in range(1, 11):
            assert naive_mod_exp(4, k, 23) != 1
            assert naive_mod_exp(9, k, 23) != 1

    def test_validates(self, tiny):
        tiny.validate()


class TestSetupGroup:
    def test_deterministic_for_fixed_seed(self):
        a = groups.setup_group(32, b"seed-x")
        b = groups.setup_group(32, b"seed-x")
        assert a == b

    def test_different_seeds_differ(self):
        a = groups.setup_group(32, b"seed-x")
        b = groups.setup_group(32, b"seed-y")
        assert a != b

    def test_255_bit_request_gives_255_bit_modulus(self):
        params = groups.setup_group(255, b"prod-sized")
        assert params.modulus_p.bit_length() == 255

    def test_output_is_safe_prime_group(self):
        params = groups.setup_group(48, b"check")
        p, q = params.modulus_p, params.order_q
        assert p == 2 * q + 1
        assert groups.is_probable_prime(p, rounds=64)
        assert groups.is_probable_prime(q, rounds=64)
        # Independent primality oracle.
        assert sympy.isprime(p) and sympy.isprime(q)
        for gen in (params.gen_g, params.gen_h):
            assert gen not in (0, 1)
            assert pow(gen, q, p) == 1

    def test_h_is_hash_derived_from_g(self):
        params = groups.setup_group(48, b"check")
        material = (
            params.gen_g.to_bytes((params.modulus_p.bit_length() + 7) // 8, "big")
            + b"|"
            + b"check"
        )
        assert groups.derive_subgroup_element(b"privess/h", material, params.modulus_p) == params.gen_h

    def test_rejects_too_small(self):
        with pytest.raises(groups.GroupSetupError):
            groups.setup_group(8, b"x")

    def test_embedded_profiles_verify(self):
        for name in ("test64", "prod"):
            params = groups.get_profile(name)
            params.validate()
            assert params.modulus_p == 2 * params.order_q + 1
            assert sympy.isprime(params.modulus_p)
            assert sympy.isprime(params.order_q)

    def test_profiles_reproducible_from_seeds(self):
        assert groups.setup_group(64, groups.TEST64_SEED) == groups.get_profile("test64")


class TestModExp:
    def test_example_4_cubed(self, tiny):
        assert groups.mod_exp(4, 3, tiny) == naive_mod_exp(4, 3, 23) == 18

    def test_exponent_zero_is_identity(self, tiny):
        for base in (2, 4, 9, 22):
            assert groups.mod_exp(base, 0, tiny) == 1

    def test_subgroup_order_annihilates(self, tiny):
        assert groups.mod_exp(4, 11, tiny) == naive_mod_exp(4, 11, 23) == 1

    def test_exponent_homomorphism(self, tiny):
        g, q = tiny.gen_g, tiny.order_q
        for x in range(q):
            for y in range(q):
                lhs = (
                    groups.mod_exp(g, x, tiny) * groups.mod_exp(g, y, tiny)
                ) % tiny.modulus_p
                assert lhs == groups.mod_exp(g, (x + y) % q, tiny)


class TestFixedPoint:
    def test_zero(self, test64):
        assert groups.encode_fixed(0, test64) == 0

    def test_scaling_definition(self, test64):
        assert groups.encode_fixed(Fraction(3, 2), test64) == 15000

    def test_negative_wraps(self, test64):
        q = test64.order_q
        assert groups.encode_fixed(Fraction(-5, 2), test64) == q - 25000

    def test_tiny_field_overflow(self, tiny):
        with pytest.raises(groups.EncodingError):
            groups.encode_fixed(Fraction(-5, 2), tiny, scale=10_000)

    def test_32bit_overflow(self, test64):
        with pytest.raises(groups.EncodingError):
            groups.encode_fixed(1 << 32, test64)

    def test_round_half_away_from_zero(self, test64):
        assert groups.encode_fixed(Fraction(1, 20000), test64) == 1
        assert groups.encode_fixed(Fraction(-1, 20000), test64) == test64.order_q - 1

    @given(st.integers(min_value=-(10**8), max_value=10**8))
    def test_roundtrip_on_grid(self, raw):
        params = groups.get_profile("test64")
        value = Fraction(raw, params.fixed_point_scale)
        assert groups.decode_fixed(groups.encode_fixed(value, params), params) == value

    @given(
        st.fractions(
            min_value=Fraction(-1000), max_value=Fraction(1000), max_denominator=997
        )
    )
    @settings(max_examples=200)
    def test_roundtrip_error_bounded(self, value):
        params = groups.get_profile("test64")
        decoded = groups.decode_fixed(groups.encode_fixed(value, params), params)
        assert abs(decoded - value) <= Fraction(1, 2 * params.fixed_point_scale)


class TestSerialization:
    def test_config_roundtrip(self, test64):
        assert groups.GroupParams.from_config(test64.to_config()) == test64

    def test_fixed_width_bytes(self, test64):
        assert len(test64.element_to_bytes(1)) == test64.element_bytes
        x = test64.modulus_p - 1
        assert test64.element_from_bytes(test64.element_to_bytes(x)) == x
        s = test64.order_q - 1
        assert test64.scalar_from_bytes(test64.scalar_to_bytes(s)) == s
