#include "heintfl/paillier.hpp"

#include <cmath>

namespace heintfl::crypto {

namespace {

// Fills a Bignum with `bits` random bits from the seeded stream.
Bignum random_bits(Rng& rng, int bits) {
  const int words = (bits + 63) / 64;
  std::vector<std::uint64_t> buf(static_cast<std::size_t>(words));
  for (auto& w : buf) w = rng.next_u64();
  // mask excess bits in the top word
  const int excess = words * 64 - bits;
  if (excess > 0) buf.back() >>= excess;
  Bignum out;
  mpz_import(out.get(), buf.size(), -1, sizeof(std::uint64_t), 0, 0, buf.data());
  return out;
}

Bignum random_prime(Rng& rng, int bits) {
  for (;;) {
    Bignum cand = random_bits(rng, bits);
    mpz_setbit(cand.get(), static_cast<mp_bitcnt_t>(bits - 1));  // full bit length
    mpz_setbit(cand.get(), static_cast<mp_bitcnt_t>(bits - 2));  // product keeps 2*bits
    mpz_setbit(cand.get(), 0);
    Bignum p;
    mpz_nextprime(p.get(), cand.get());
    if (mpz_sizeinbase(p.get(), 2) == static_cast<std::size_t>(bits)) return p;
  }
}

std::uint64_t fingerprint(const Bignum& n) {
  // FNV-1a over the magnitude bytes
  const std::size_t count = (mpz_sizeinbase(n.get(), 2) + 7) / 8;
  std::vector<std::uint8_t> bytes(count);
  std::size_t written = 0;
  mpz_export(bytes.data(), &written, 1, 1, 1, 0, n.get());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < written; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// L(x) = (x - 1) / n
Bignum l_function(const Bignum& x, const Bignum& n) {
  Bignum out;
  mpz_sub_ui(out.get(), x.get(), 1);
  mpz_divexact(out.get(), out.get(), n.get());
  return out;
}

}  // namespace

Keypair keygen(std::uint64_t seed, const SchemeParams& params) {
  params.validate();
  Rng rng(derive_seed(seed, "paillier-keygen"));
  const int half = params.modulus_bits / 2;

  Bignum p, q, n, lambda;
  for (;;) {
    p = random_prime(rng, half);
    q = random_prime(rng, half);
    if (mpz_cmp(p.get(), q.get()) == 0) continue;
    mpz_mul(n.get(), p.get(), q.get());
    if (mpz_sizeinbase(n.get(), 2) != static_cast<std::size_t>(params.modulus_bits)) continue;

    Bignum p1, q1;
    mpz_sub_ui(p1.get(), p.get(), 1);
    mpz_sub_ui(q1.get(), q.get(), 1);
    mpz_lcm(lambda.get(), p1.get(), q1.get());

    Bignum phi, g;
    mpz_mul(phi.get(), p1.get(), q1.get());
    mpz_gcd(g.get(), n.get(), phi.get());
    if (mpz_cmp_ui(g.get(), 1) == 0) break;
  }

  auto pub = std::make_shared<PublicKey>();
  pub->params = params;
  pub->n = n;
  mpz_mul(pub->n_square.get(), n.get(), n.get());
  pub->key_id = fingerprint(n);

  // g = n + 1, so g^lambda mod n^2 = 1 + lambda*n and mu = lambda^-1 mod n.
  SecretKey sec;
  sec.lambda = lambda;
  Bignum g_pow;
  mpz_mul(g_pow.get(), lambda.get(), n.get());
  mpz_add_ui(g_pow.get(), g_pow.get(), 1);
  mpz_mod(g_pow.get(), g_pow.get(), pub->n_square.get());
  Bignum l = l_function(g_pow, pub->n);
  if (mpz_invert(sec.mu.get(), l.get(), pub->n.get()) == 0) {
    throw std::runtime_error("keygen: modulus admits no decryption inverse");
  }
  return Keypair{std::move(pub), std::move(sec)};
}

std::int64_t fixed_encode(double v, int scale_bits, double max_value) {
  if (!std::isfinite(v) || std::abs(v) > max_value) {
    throw std::overflow_error("fixed_encode: value magnitude exceeds fixed-point range");
  }
  return std::llround(std::ldexp(v, scale_bits));
}

Bignum encrypt_integer(const PublicKey& pk, std::int64_t m, Rng& rng) {
  // message in Z_n, negatives wrapped
  Bignum msg;
  if (m >= 0) {
    mpz_set_ui(msg.get(), static_cast<unsigned long>(m));
  } else {
    mpz_set_ui(msg.get(), static_cast<unsigned long>(-m));
    mpz_sub(msg.get(), pk.n.get(), msg.get());
  }

  // (1+n)^m = 1 + m*n (mod n^2)
  Bignum c;
  mpz_mul(c.get(), msg.get(), pk.n.get());
  mpz_add_ui(c.get(), c.get(), 1);
  mpz_mod(c.get(), c.get(), pk.n_square.get());

  // blind with r^n, r uniform in [2, n) and coprime to n
  Bignum r, g;
  for (;;) {
    r = random_bits(rng, pk.params.modulus_bits);
    mpz_mod(r.get(), r.get(), pk.n.get());
    if (mpz_cmp_ui(r.get(), 2) < 0) continue;
    mpz_gcd(g.get(), r.get(), pk.n.get());
    if (mpz_cmp_ui(g.get(), 1) == 0) break;
  }
  Bignum blind;
  mpz_powm(blind.get(), r.get(), pk.n.get(), pk.n_square.get());
  mpz_mul(c.get(), c.get(), blind.get());
  mpz_mod(c.get(), c.get(), pk.n_square.get());
  return c;
}

Bignum decrypt_integer(const PublicKey& pk, const SecretKey& sk, const Bignum& c, int max_bits) {
  Bignum x;
  mpz_powm(x.get(), c.get(), sk.lambda.get(), pk.n_square.get());
  Bignum m = l_function(x, pk.n);
  mpz_mul(m.get(), m.get(), sk.mu.get());
  mpz_mod(m.get(), m.get(), pk.n.get());

  // center into (-n/2, n/2]
  Bignum half;
  mpz_fdiv_q_2exp(half.get(), pk.n.get(), 1);
  if (mpz_cmp(m.get(), half.get()) > 0) {
    mpz_sub(m.get(), m.get(), pk.n.get());
  }
  Bignum mag;
  mpz_abs(mag.get(), m.get());
  if (mpz_sizeinbase(mag.get(), 2) > static_cast<std::size_t>(max_bits)) {
    throw std::runtime_error(
        "decrypt: plaintext outside fixed-point range (wrong key or overflow)");
  }
  return m;
}

Bignum add_ciphertexts(const PublicKey& pk, const Bignum& c1, const Bignum& c2) {
  Bignum out;
  mpz_mul(out.get(), c1.get(), c2.get());
  mpz_mod(out.get(), out.get(), pk.n_square.get());
  return out;
}

Bignum scalar_multiply(const PublicKey& pk, const Bignum& c, std::uint64_t k) {
  Bignum e;
  mpz_set_ui(e.get(), static_cast<unsigned long>(k));
  Bignum out;
  mpz_powm(out.get(), c.get(), e.get(), pk.n_square.get());
  return out;
}

Bignum encrypt_zero_deterministic(const PublicKey&) {
  return Bignum(1);  // (1+n)^0 * 1^n = 1
}

void export_slot(const Bignum& c, std::uint8_t* out, int slot_bytes) {
  std::fill(out, out + slot_bytes, 0);
  const std::size_t need = (mpz_sizeinbase(c.get(), 2) + 7) / 8;
  if (need > static_cast<std::size_t>(slot_bytes)) {
    throw std::runtime_error("export_slot: ciphertext wider than slot");
  }
  std::size_t written = 0;
  mpz_export(out + (slot_bytes - need), &written, 1, 1, 1, 0, c.get());
}

Bignum import_slot(const std::uint8_t* in, int slot_bytes) {
  Bignum out;
  mpz_import(out.get(), static_cast<std::size_t>(slot_bytes), 1, 1, 1, 0, in);
  return out;
}

double bignum_to_double(const Bignum& v) { return mpz_get_d(v.get()); }

}  // namespace heintfl::crypto
