#include "heintfl/masked_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace heintfl::crypto {

namespace {

constexpr std::uint8_t kMagic[4] = {'H', 'I', 'F', 'L'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("deserialize: truncated message");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
};

}  // namespace

std::size_t EncryptionMask::set_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void EncryptionMask::recompute_eta() {
  eta = bits.empty() ? 0.0
                     : static_cast<double>(set_count()) / static_cast<double>(bits.size());
}

EncryptionMask build_mask(double eta, std::int64_t param_count,
                          const std::vector<double>* sensitivity, std::uint64_t seed) {
  if (param_count <= 0) throw std::invalid_argument("build_mask: param_count must be positive");
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("build_mask: eta must be in [0,1]");
  if (sensitivity && static_cast<std::int64_t>(sensitivity->size()) != param_count) {
    throw std::invalid_argument("build_mask: sensitivity length mismatch");
  }
  const auto k = static_cast<std::size_t>(std::llround(eta * static_cast<double>(param_count)));

  EncryptionMask mask;
  mask.bits.assign(static_cast<std::size_t>(param_count), 0);
  if (k > 0) {
    std::vector<std::size_t> order(static_cast<std::size_t>(param_count));
    std::iota(order.begin(), order.end(), 0);
    if (sensitivity) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs((*sensitivity)[a]);
        const double mb = std::abs((*sensitivity)[b]);
        if (ma != mb) return ma > mb;
        return a < b;  // ties to the lowest index
      });
    } else {
      Rng rng(derive_seed(seed, "mask-uniform"));
      // partial Fisher-Yates: the first k entries become a uniform k-subset
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
      }
    }
    for (std::size_t i = 0; i < k; ++i) mask.bits[order[i]] = 1;
  }
  mask.recompute_eta();
  return mask;
}

MaskedModel encrypt_masked(const nn::ModelParams& params, const EncryptionMask& mask,
                           const Keypair& key, std::uint64_t randomness_seed) {
  if (params.flat.size() != mask.bits.size()) {
    throw std::invalid_argument("encrypt_masked: mask length does not match parameters");
  }
  const SchemeParams& sp = key.pub->params;

  MaskedModel out;
  out.mask = mask;
  out.is_encrypted = true;
  out.cipher.slot_bytes = sp.slot_bytes();
  out.cipher.value_scale_bits = sp.value_scale_bits;
  out.cipher.weight_scale_bits = 0;
  out.cipher.weight_l1 = 0.0;
  out.cipher.key_id = key.pub->key_id;
  out.cipher.pk = key.pub;

  Rng rng(derive_seed(randomness_seed, "enc-randomness"));
  out.cipher.slots.reserve(mask.set_count());
  out.plain.reserve(mask.bits.size() - mask.set_count());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) {
      const std::int64_t m = fixed_encode(params.flat[i], sp.value_scale_bits, sp.max_value);
      out.cipher.slots.push_back(encrypt_integer(*key.pub, m, rng));
    } else {
      out.plain.push_back(params.flat[i]);
    }
  }
  return out;
}

MaskedModel plain_model(const nn::ModelParams& params, const EncryptionMask& mask) {
  if (params.flat.size() != mask.bits.size()) {
    throw std::invalid_argument("plain_model: mask length does not match parameters");
  }
  MaskedModel out;
  out.mask = mask;
  out.is_encrypted = false;
  out.plain = params.flat;
  return out;
}

std::vector<double> decrypt_masked(const MaskedModel& m, const EncryptionMask& mask,
                                   const Keypair& key) {
  if (!m.is_encrypted) throw std::invalid_argument("decrypt_masked: message is not encrypted");
  if (!(m.mask == mask)) throw std::invalid_argument("decrypt_masked: mask mismatch");
  if (m.cipher.key_id != key.pub->key_id) {
    throw std::runtime_error("decrypt_masked: ciphertext encrypted under a different key");
  }
  if (m.cipher.slot_count() != static_cast<std::int64_t>(mask.set_count()) ||
      m.cipher.slots.size() + m.plain.size() != mask.bits.size()) {
    throw std::invalid_argument("decrypt_masked: slot/plain counts do not cover the mask");
  }

  const int total_scale = m.cipher.value_scale_bits + m.cipher.weight_scale_bits;
  // Headroom: encoded magnitude is bounded by max_value * max(1, weight_l1)
  // at the combined scale; anything far beyond that is garbage.
  const int max_bits = total_scale + 24 +
                       static_cast<int>(std::ceil(std::log2(
                           key.pub->params.max_value * std::max(1.0, m.cipher.weight_l1 + 1.0))));
  const double scale = std::ldexp(1.0, -total_scale);

  std::vector<double> flat(mask.bits.size());
  std::size_t ci = 0, pi = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) {
      const Bignum v = decrypt_integer(*key.pub, key.sec, m.cipher.slots[ci++], max_bits);
      flat[i] = bignum_to_double(v) * scale;
    } else {
      flat[i] = m.plain[pi++];
    }
  }
  return flat;
}

MaskedModel add_weighted(const MaskedModel& acc, const MaskedModel& x, double weight) {
  if (!(acc.mask == x.mask)) throw std::invalid_argument("add_weighted: mask mismatch");
  if (!acc.is_encrypted || !x.is_encrypted) {
    throw std::invalid_argument("add_weighted: both operands must be encrypted messages");
  }
  if (acc.cipher.key_id != x.cipher.key_id) {
    throw std::invalid_argument("add_weighted: operands encrypted under different keys");
  }
  if (acc.plain.size() != x.plain.size()) {
    throw std::invalid_argument("add_weighted: plain part size mismatch");
  }
  if (x.cipher.weight_scale_bits != 0) {
    throw std::invalid_argument("add_weighted: right operand already carries weights");
  }
  if (!(weight >= 0.0) || weight > 1e6) {
    throw std::invalid_argument("add_weighted: weight out of range");
  }
  const PublicKey& pk = *acc.cipher.pk;
  const SchemeParams& sp = pk.params;

  MaskedModel out = acc;
  // promote a fresh accumulator to the weighted scale (exact: weight 1.0)
  if (out.cipher.weight_scale_bits == 0 && !out.cipher.slots.empty()) {
    const std::uint64_t unit = std::uint64_t{1} << sp.weight_scale_bits;
    for (auto& slot : out.cipher.slots) slot = scalar_multiply(pk, slot, unit);
    out.cipher.weight_l1 = 1.0;
  }
  out.cipher.weight_scale_bits = sp.weight_scale_bits;
  out.cipher.weight_l1 += std::abs(weight);

  // overflow guard: the accumulated plaintext must stay well inside n
  const double used_bits = sp.value_scale_bits + sp.weight_scale_bits +
                           std::log2(sp.max_value * (out.cipher.weight_l1 + 1.0)) + 2;
  if (used_bits >= static_cast<double>(sp.modulus_bits) - 1) {
    throw std::overflow_error("add_weighted: accumulated scale exceeds plaintext space");
  }

  const auto q = static_cast<std::uint64_t>(
      std::llround(weight * std::ldexp(1.0, sp.weight_scale_bits)));
  for (std::size_t i = 0; i < out.cipher.slots.size(); ++i) {
    const Bignum scaled = scalar_multiply(pk, x.cipher.slots[i], q);
    out.cipher.slots[i] = add_ciphertexts(pk, out.cipher.slots[i], scaled);
  }
  for (std::size_t i = 0; i < out.plain.size(); ++i) {
    out.plain[i] += weight * x.plain[i];
  }
  return out;
}

MaskedModel zero_accumulator(const MaskedModel& like) {
  if (!like.is_encrypted) {
    throw std::invalid_argument("zero_accumulator: template must be encrypted");
  }
  MaskedModel out;
  out.mask = like.mask;
  out.is_encrypted = true;
  out.cipher.slot_bytes = like.cipher.slot_bytes;
  out.cipher.value_scale_bits = like.cipher.value_scale_bits;
  out.cipher.weight_scale_bits = like.cipher.pk->params.weight_scale_bits;
  out.cipher.weight_l1 = 0.0;
  out.cipher.key_id = like.cipher.key_id;
  out.cipher.pk = like.cipher.pk;
  out.cipher.slots.assign(like.cipher.slots.size(), encrypt_zero_deterministic(*like.cipher.pk));
  out.plain.assign(like.plain.size(), 0.0);
  return out;
}

std::vector<std::uint8_t> serialize_masked(const MaskedModel& m) {
  if (m.mask.bits.empty()) throw std::invalid_argument("serialize_masked: empty mask");

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  out.push_back(m.is_encrypted ? 1 : 0);
  out.push_back(0);
  put_u64(out, m.mask.bits.size());

  // run-length encode the mask, alternating runs starting with zeros
  std::vector<std::uint32_t> runs;
  std::uint8_t cur = 0;
  std::uint32_t len = 0;
  for (std::uint8_t b : m.mask.bits) {
    if (b == cur) {
      ++len;
    } else {
      runs.push_back(len);
      cur = b;
      len = 1;
    }
  }
  runs.push_back(len);
  put_u32(out, static_cast<std::uint32_t>(runs.size()));
  for (std::uint32_t r : runs) put_u32(out, r);

  if (m.is_encrypted) {
    put_u64(out, static_cast<std::uint64_t>(m.cipher.slot_count()));
    put_u16(out, static_cast<std::uint16_t>(m.cipher.slot_bytes));
    put_u16(out, static_cast<std::uint16_t>(m.cipher.value_scale_bits));
    put_u16(out, static_cast<std::uint16_t>(m.cipher.weight_scale_bits));
    put_u16(out, 0);
    put_f64(out, m.cipher.weight_l1);
    put_u64(out, m.cipher.key_id);
    const std::size_t payload_at = out.size();
    out.resize(payload_at + static_cast<std::size_t>(m.cipher.byte_size()));
    for (std::int64_t i = 0; i < m.cipher.slot_count(); ++i) {
      export_slot(m.cipher.slots[static_cast<std::size_t>(i)],
                  out.data() + payload_at + i * m.cipher.slot_bytes, m.cipher.slot_bytes);
    }
  }

  put_u64(out, m.plain.size());
  for (double v : m.plain) put_f64(out, v);
  return out;
}

MaskedModel deserialize_masked(const std::vector<std::uint8_t>& bytes,
                               std::shared_ptr<const PublicKey> pk) {
  Reader r{bytes};
  r.need(8);
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw std::runtime_error("deserialize: bad magic");
  }
  r.pos = 4;
  if (r.u16() != kVersion) throw std::runtime_error("deserialize: unsupported version");
  const std::uint8_t flags = bytes[r.pos++];
  r.pos++;  // reserved

  MaskedModel m;
  m.is_encrypted = (flags & 1) != 0;
  const std::uint64_t param_count = r.u64();
  const std::uint32_t run_count = r.u32();
  m.mask.bits.reserve(param_count);
  std::uint8_t cur = 0;
  for (std::uint32_t i = 0; i < run_count; ++i) {
    const std::uint32_t len = r.u32();
    m.mask.bits.insert(m.mask.bits.end(), len, cur);
    cur = cur ? 0 : 1;
  }
  if (m.mask.bits.size() != param_count) {
    throw std::runtime_error("deserialize: mask runs do not cover param count");
  }
  m.mask.recompute_eta();

  if (m.is_encrypted) {
    const std::uint64_t slot_count = r.u64();
    m.cipher.slot_bytes = r.u16();
    m.cipher.value_scale_bits = r.u16();
    m.cipher.weight_scale_bits = r.u16();
    r.u16();  // reserved
    m.cipher.weight_l1 = r.f64();
    m.cipher.key_id = r.u64();
    if (!pk) throw std::runtime_error("deserialize: encrypted message needs a public key");
    if (pk->key_id != m.cipher.key_id) {
      throw std::runtime_error("deserialize: ciphertext encrypted under a different key");
    }
    if (m.cipher.slot_bytes != pk->params.slot_bytes()) {
      throw std::runtime_error("deserialize: slot width does not match scheme");
    }
    m.cipher.pk = std::move(pk);
    r.need(slot_count * static_cast<std::uint64_t>(m.cipher.slot_bytes));
    m.cipher.slots.reserve(slot_count);
    for (std::uint64_t i = 0; i < slot_count; ++i) {
      m.cipher.slots.push_back(import_slot(bytes.data() + r.pos, m.cipher.slot_bytes));
      r.pos += static_cast<std::size_t>(m.cipher.slot_bytes);
    }
  }

  const std::uint64_t plain_count = r.u64();
  r.need(plain_count * 8);
  m.plain.reserve(plain_count);
  for (std::uint64_t i = 0; i < plain_count; ++i) m.plain.push_back(r.f64());

  if (m.is_encrypted) {
    if (m.cipher.slots.size() != m.mask.set_count() ||
        m.cipher.slots.size() + m.plain.size() != m.mask.bits.size()) {
      throw std::runtime_error("deserialize: message does not cover the mask");
    }
  } else if (m.plain.size() != m.mask.bits.size()) {
    throw std::runtime_error("deserialize: message does not cover the mask");
  }
  return m;
}

std::int64_t serialized_cipher_bytes(const MaskedModel& m) {
  return m.is_encrypted ? m.cipher.byte_size() : 0;
}

}  // namespace heintfl::crypto
