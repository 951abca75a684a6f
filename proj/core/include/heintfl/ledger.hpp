#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

namespace heintfl::fl {

// Per-round resource accounting. Byte columns are exact serialized sizes;
// op counters count whole model encryptions/decryptions; time columns are
// wall-clock measurements and the only non-reproducible fields.
struct LedgerRow {
  std::int64_t round = 0;
  bool is_authentic = false;
  std::int64_t plaintext_bytes_sent = 0;   // client->server uplink, all clients
  std::int64_t ciphertext_bytes_sent = 0;  // ciphertext payload share of uplink
  std::int64_t broadcast_plain_bytes = 0;  // server->client, one copy
  std::int64_t broadcast_cipher_bytes = 0;
  std::int64_t enc_ops = 0;
  std::int64_t dec_ops = 0;
  double enc_time_s = 0.0;
  double dec_time_s = 0.0;
  double train_time_s = 0.0;
  double agg_time_s = 0.0;
};

struct CostLedger {
  std::vector<LedgerRow> rows;

  LedgerRow totals() const;
  void write_csv(std::ostream& out) const;
  static const char* csv_header();
};

}  // namespace heintfl::fl
