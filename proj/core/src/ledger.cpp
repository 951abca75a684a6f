#include "heintfl/ledger.hpp"

#include <cstdio>

namespace heintfl::fl {

LedgerRow CostLedger::totals() const {
  LedgerRow t;
  t.round = static_cast<std::int64_t>(rows.size());
  for (const auto& r : rows) {
    t.plaintext_bytes_sent += r.plaintext_bytes_sent;
    t.ciphertext_bytes_sent += r.ciphertext_bytes_sent;
    t.broadcast_plain_bytes += r.broadcast_plain_bytes;
    t.broadcast_cipher_bytes += r.broadcast_cipher_bytes;
    t.enc_ops += r.enc_ops;
    t.dec_ops += r.dec_ops;
    t.enc_time_s += r.enc_time_s;
    t.dec_time_s += r.dec_time_s;
    t.train_time_s += r.train_time_s;
    t.agg_time_s += r.agg_time_s;
  }
  return t;
}

const char* CostLedger::csv_header() {
  return "round,is_authentic,plaintext_bytes_sent,ciphertext_bytes_sent,"
         "broadcast_plain_bytes,broadcast_cipher_bytes,enc_ops,dec_ops,"
         "enc_time_s,dec_time_s,train_time_s,agg_time_s";
}

void CostLedger::write_csv(std::ostream& out) const {
  out << csv_header() << "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%d,%lld,%lld,%lld,%lld,%lld,%lld,%.9f,%.9f,%.9f,%.9f\n",
                  static_cast<long long>(r.round), r.is_authentic ? 1 : 0,
                  static_cast<long long>(r.plaintext_bytes_sent),
                  static_cast<long long>(r.ciphertext_bytes_sent),
                  static_cast<long long>(r.broadcast_plain_bytes),
                  static_cast<long long>(r.broadcast_cipher_bytes),
                  static_cast<long long>(r.enc_ops), static_cast<long long>(r.dec_ops),
                  r.enc_time_s, r.dec_time_s, r.train_time_s, r.agg_time_s);
    out << buf;
  }
}

}  // namespace heintfl::fl
