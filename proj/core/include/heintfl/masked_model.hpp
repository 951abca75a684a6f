#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "heintfl/nn.hpp"
#include "heintfl/paillier.hpp"

namespace heintfl::crypto {

// Binary selector over parameter indices; bit=1 means "transmit encrypted".
// eta is maintained exactly as set_count/size.
struct EncryptionMask {
  std::vector<std::uint8_t> bits;
  double eta = 0.0;

  std::size_t set_count() const;
  void recompute_eta();
  bool operator==(const EncryptionMask& o) const { return bits == o.bits; }
};

// Builds a mask with exactly round(eta * param_count) bits set. When a
// sensitivity vector is given the top-magnitude entries are selected (ties
// to the lowest index); otherwise a seeded uniform choice.
EncryptionMask build_mask(double eta, std::int64_t param_count,
                          const std::vector<double>* sensitivity, std::uint64_t seed);

// Homomorphic payload covering the masked coordinates, in ascending index
// order. Tracks the fixed-point scales so weighted sums stay decodable.
struct CipherBlock {
  std::vector<Bignum> slots;
  int slot_bytes = 0;
  int value_scale_bits = 0;
  int weight_scale_bits = 0;  // 0 until aggregation weights are folded in
  double weight_l1 = 0.0;     // sum of |weight| folded in, for overflow checks
  std::uint64_t key_id = 0;
  std::shared_ptr<const PublicKey> pk;

  std::int64_t slot_count() const { return static_cast<std::int64_t>(slots.size()); }
  std::int64_t byte_size() const { return slot_count() * slot_bytes; }
};

// Hybrid protocol message: ciphertext for masked entries, plaintext for the
// rest. For plaintext messages (is_encrypted=false) `plain` carries every
// coordinate and the cipher block is empty.
struct MaskedModel {
  EncryptionMask mask;
  CipherBlock cipher;
  std::vector<double> plain;
  bool is_encrypted = false;
};

// Encrypts the masked coordinates of `params` (fixed-point encode, then
// encrypt) and copies the rest as plaintext. Per-call randomness stream.
MaskedModel encrypt_masked(const nn::ModelParams& params, const EncryptionMask& mask,
                           const Keypair& key, std::uint64_t randomness_seed);

// Wraps parameters as an unencrypted message under the given mask.
MaskedModel plain_model(const nn::ModelParams& params, const EncryptionMask& mask);

// Decrypts and reassembles the flat parameter vector. Plaintext entries come
// back bit-exact; decrypted entries within the fixed-point quantization.
std::vector<double> decrypt_masked(const MaskedModel& m, const EncryptionMask& mask,
                                   const Keypair& key);

// acc + weight * x: homomorphic scalar-multiply-then-add on the cipher part,
// ordinary arithmetic on the plain part. Masks and keys must match.
MaskedModel add_weighted(const MaskedModel& acc, const MaskedModel& x, double weight);

// Neutral accumulator (encryption of zero, zero plaintext) shaped like `like`,
// buildable from public material only.
MaskedModel zero_accumulator(const MaskedModel& like);

// Serialized layout (little-endian integers, big-endian ciphertext slots):
//   0   u8[4]  magic "HIFL"
//   4   u16    version (1)
//   6   u8     flags, bit0 = is_encrypted
//   7   u8     reserved
//   8   u64    param_count (mask length)
//  16   u32    mask run count R
//  20   u32*R  run-length encoding, alternating 0-run first
//  -- cipher section, present when is_encrypted --
//       u64    slot_count
//       u16    slot_bytes
//       u16    value_scale_bits
//       u16    weight_scale_bits
//       u16    reserved
//       f64    weight_l1
//       u64    key_id
//       u8[slot_count*slot_bytes] ciphertext payload
//  -- plain section --
//       u64    plain_count
//       f64[plain_count]
std::vector<std::uint8_t> serialize_masked(const MaskedModel& m);
MaskedModel deserialize_masked(const std::vector<std::uint8_t>& bytes,
                               std::shared_ptr<const PublicKey> pk);

// Byte count of the ciphertext payload inside the serialized form; the
// ledger's ciphertext column. Equals cipher.byte_size().
std::int64_t serialized_cipher_bytes(const MaskedModel& m);

}  // namespace heintfl::crypto
