#include "heintfl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "heintfl/convergence.hpp"

namespace heintfl::analysis {

RunSummary summarize_run(const RunRecordSet& run) {
  if (run.history.empty()) throw std::invalid_argument("summarize_run: empty history");
  if (run.num_clients < 1) throw std::invalid_argument("summarize_run: num_clients missing");

  RunSummary s;
  s.rho = run.rho;
  s.eta = run.eta;
  s.rounds_to_convergence = run.converged_round ? static_cast<double>(*run.converged_round + 1)
                                                : static_cast<double>(run.history.size());

  const auto totals = run.ledger.totals();
  const double n = run.num_clients;
  // every client receives one broadcast copy per round
  s.ciphertext_mb =
      (static_cast<double>(totals.ciphertext_bytes_sent) +
       n * static_cast<double>(totals.broadcast_cipher_bytes)) /
      1e6;
  s.total_comm_mb = (static_cast<double>(totals.plaintext_bytes_sent +
                                         totals.ciphertext_bytes_sent) /
                         n +
                     static_cast<double>(totals.broadcast_plain_bytes +
                                         totals.broadcast_cipher_bytes)) /
                    1e6;
  s.comp_time_s = (totals.train_time_s + totals.enc_time_s + totals.dec_time_s) / n;

  std::vector<double> acc;
  acc.reserve(run.history.size());
  for (const auto& r : run.history) acc.push_back(r.test_accuracy);
  s.accuracy_pct = smooth_series(acc, run.smoothing_window).back();
  return s;
}

namespace {

double relative_delta(double value, double baseline) {
  if (baseline == 0.0) return 0.0;
  return (value - baseline) / baseline;
}

RunSummary mean_of(const std::vector<RunSummary>& xs) {
  RunSummary m;
  for (const auto& x : xs) {
    m.rho = x.rho;
    m.eta = x.eta;
    m.rounds_to_convergence += x.rounds_to_convergence;
    m.ciphertext_mb += x.ciphertext_mb;
    m.total_comm_mb += x.total_comm_mb;
    m.comp_time_s += x.comp_time_s;
    m.accuracy_pct += x.accuracy_pct;
  }
  const double n = static_cast<double>(xs.size());
  m.rounds_to_convergence /= n;
  m.ciphertext_mb /= n;
  m.total_comm_mb /= n;
  m.comp_time_s /= n;
  m.accuracy_pct /= n;
  return m;
}

}  // namespace

ExperimentReport build_report(const std::vector<RunRecordSet>& runs) {
  if (runs.empty()) throw std::invalid_argument("build_report: no runs");

  std::map<std::pair<double, double>, std::vector<const RunRecordSet*>> groups;
  for (const auto& run : runs) {
    groups[{run.rho, run.eta}].push_back(&run);
  }

  ExperimentReport report;
  bool baseline_found = false;
  for (const auto& [key, members] : groups) {
    if (members.size() < 3) {
      throw std::invalid_argument(
          "build_report: need at least 3 repetitions per configuration to trim best/worst");
    }
    std::vector<RunSummary> summaries;
    summaries.reserve(members.size());
    for (const auto* m : members) summaries.push_back(summarize_run(*m));

    // drop the best and worst performing repetition by accuracy
    std::sort(summaries.begin(), summaries.end(),
              [](const RunSummary& a, const RunSummary& b) {
                return a.accuracy_pct < b.accuracy_pct;
              });
    std::vector<RunSummary> kept(summaries.begin() + 1, summaries.end() - 1);

    ReportRow row;
    row.rho = key.first;
    row.eta = key.second;
    row.repetitions_used = static_cast<int>(kept.size());
    row.is_baseline = std::any_of(members.begin(), members.end(),
                                  [](const RunRecordSet* r) { return r->is_baseline; });
    row.mean = mean_of(kept);
    report.rows.push_back(row);
    if (row.is_baseline) baseline_found = true;
  }
  if (!baseline_found) throw std::invalid_argument("build_report: no baseline flagged");

  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (report.rows[i].is_baseline) {
      report.baseline_index = i;
      break;
    }
  }
  const RunSummary& base = report.rows[report.baseline_index].mean;
  for (auto& row : report.rows) {
    row.delta.rounds_to_convergence =
        relative_delta(row.mean.rounds_to_convergence, base.rounds_to_convergence);
    row.delta.ciphertext_mb = relative_delta(row.mean.ciphertext_mb, base.ciphertext_mb);
    row.delta.total_comm_mb = relative_delta(row.mean.total_comm_mb, base.total_comm_mb);
    row.delta.comp_time_s = relative_delta(row.mean.comp_time_s, base.comp_time_s);
    row.delta.accuracy_pct = relative_delta(row.mean.accuracy_pct, base.accuracy_pct);
  }
  return report;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "rho,eta,is_baseline,repetitions_used,rounds_to_convergence,ciphertext_mb,"
         "total_comm_mb,comp_time_s,accuracy_pct,delta_rounds,delta_ciphertext,"
         "delta_comm,delta_time,delta_accuracy\n";
  char buf[512];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf),
                  "%.6g,%.6g,%d,%d,%.6g,%.8g,%.8g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.rho,
                  r.eta, r.is_baseline ? 1 : 0, r.repetitions_used, r.mean.rounds_to_convergence,
                  r.mean.ciphertext_mb, r.mean.total_comm_mb, r.mean.comp_time_s,
                  r.mean.accuracy_pct, r.delta.rounds_to_convergence, r.delta.ciphertext_mb,
                  r.delta.total_comm_mb, r.delta.comp_time_s, r.delta.accuracy_pct);
    out << buf;
  }
}

void write_report_table(std::ostream& out, const ExperimentReport& report) {
  out << "config            | conv[#rounds]     | ciphertext[MB]    | comm[MB]          | "
         "comp_time[s]      | accuracy[%]\n";
  out << "------------------+-------------------+-------------------+-------------------+-"
         "------------------+-------------------\n";
  char buf[512];
  for (const auto& r : report.rows) {
    auto cell = [&](double value, double delta, const char* fmt) {
      static char c[64];
      char head[32];
      std::snprintf(head, sizeof(head), fmt, value);
      if (r.is_baseline) {
        std::snprintf(c, sizeof(c), "%-19s", head);
      } else {
        char full[60];
        std::snprintf(full, sizeof(full), "%s (%+.1f%%)", head, delta * 100.0);
        std::snprintf(c, sizeof(c), "%-19s", full);
      }
      return std::string(c);
    };
    char name[32];
    std::snprintf(name, sizeof(name), "rho=%-4.3g eta=%-4.3g", r.rho, r.eta);
    std::snprintf(buf, sizeof(buf), "%-18s|%s|%s|%s|%s|%s\n", name,
                  cell(r.mean.rounds_to_convergence, r.delta.rounds_to_convergence, "%.1f").c_str(),
                  cell(r.mean.ciphertext_mb, r.delta.ciphertext_mb, "%.4f").c_str(),
                  cell(r.mean.total_comm_mb, r.delta.total_comm_mb, "%.3f").c_str(),
                  cell(r.mean.comp_time_s, r.delta.comp_time_s, "%.2f").c_str(),
                  cell(r.mean.accuracy_pct, r.delta.accuracy_pct, "%.2f").c_str());
    out << buf;
  }
}

}  // namespace heintfl::analysis
