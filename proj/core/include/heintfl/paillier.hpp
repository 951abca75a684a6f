#pragma once

#include <gmp.h>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "heintfl/rng.hpp"

namespace heintfl::crypto {

// Thin RAII wrapper over mpz_t; value semantics, no gmpxx dependency.
class Bignum {
 public:
  Bignum() { mpz_init(v_); }
  explicit Bignum(unsigned long x) { mpz_init_set_ui(v_, x); }
  Bignum(const Bignum& o) { mpz_init_set(v_, o.v_); }
  Bignum(Bignum&& o) noexcept {
    mpz_init(v_);
    mpz_swap(v_, o.v_);
  }
  Bignum& operator=(const Bignum& o) {
    if (this != &o) mpz_set(v_, o.v_);
    return *this;
  }
  Bignum& operator=(Bignum&& o) noexcept {
    mpz_swap(v_, o.v_);
    return *this;
  }
  ~Bignum() { mpz_clear(v_); }

  mpz_ptr get() { return v_; }
  mpz_srcptr get() const { return v_; }

 private:
  mpz_t v_;
};

// Scheme parameters. The scheme offers ciphertext addition and
// plaintext-scalar multiplication over fixed-point-encoded reals, which is
// all the aggregation step requires.
struct SchemeParams {
  int modulus_bits = 512;     // bit length of the composite modulus n
  int value_scale_bits = 40;  // plaintext fixed-point scale (2^bits)
  int weight_scale_bits = 32; // aggregation-weight fixed-point scale
  double max_value = 1048576.0;  // encode overflow threshold (2^20)

  // Serialized width of one ciphertext slot: residues mod n^2, fixed width.
  int slot_bytes() const { return 2 * modulus_bits / 8; }
  // Ciphertext bytes per 8-byte plaintext slot.
  int expansion_factor() const { return slot_bytes() / 8; }
  void validate() const {
    if (modulus_bits < 128 || modulus_bits % 64 != 0) {
      throw std::invalid_argument("SchemeParams: modulus_bits must be a multiple of 64, >= 128");
    }
    if (value_scale_bits < 8 || value_scale_bits > 60) {
      throw std::invalid_argument("SchemeParams: value_scale_bits out of range");
    }
    if (weight_scale_bits < 8 || weight_scale_bits > 60) {
      throw std::invalid_argument("SchemeParams: weight_scale_bits out of range");
    }
    if (!(max_value > 0)) throw std::invalid_argument("SchemeParams: max_value must be positive");
  }
};

struct PublicKey {
  SchemeParams params;
  Bignum n;        // modulus
  Bignum n_square; // modulus squared (ciphertext space)
  std::uint64_t key_id = 0;  // fingerprint of n, embedded in ciphertext headers
};

struct SecretKey {
  Bignum lambda;  // lcm(p-1, q-1)
  Bignum mu;      // (L(g^lambda mod n^2))^-1 mod n
};

struct Keypair {
  std::shared_ptr<const PublicKey> pub;
  SecretKey sec;
};

// Deterministic per seed: primes are derived from a seeded stream.
Keypair keygen(std::uint64_t seed, const SchemeParams& params = {});

// Signed fixed-point encode/decode at scale 2^scale_bits.
std::int64_t fixed_encode(double v, int scale_bits, double max_value);

// Encrypts a signed integer message (wraps negatives into Z_n).
Bignum encrypt_integer(const PublicKey& pk, std::int64_t m, Rng& rng);

// Decrypts to a centered representative in (-n/2, n/2]; the caller applies
// the fixed-point scale. Throws when the result exceeds `max_bits`, which
// signals a wrong key or an accumulated overflow.
Bignum decrypt_integer(const PublicKey& pk, const SecretKey& sk, const Bignum& c, int max_bits);

// c1 * c2 mod n^2 == Enc(m1 + m2).
Bignum add_ciphertexts(const PublicKey& pk, const Bignum& c1, const Bignum& c2);

// c^k mod n^2 == Enc(k * m) for non-negative integer k.
Bignum scalar_multiply(const PublicKey& pk, const Bignum& c, std::uint64_t k);

// Enc(0) with unit randomness; valid accumulator seed for homomorphic sums.
Bignum encrypt_zero_deterministic(const PublicKey& pk);

// Fixed-width big-endian serialization of a residue mod n^2.
void export_slot(const Bignum& c, std::uint8_t* out, int slot_bytes);
Bignum import_slot(const std::uint8_t* in, int slot_bytes);

double bignum_to_double(const Bignum& v);

}  // namespace heintfl::crypto
