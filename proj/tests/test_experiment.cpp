#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "heintfl/experiment.hpp"

using namespace heintfl;
namespace fs = std::filesystem;

namespace {

exp::ExperimentConfig tiny_config(const std::string& name, const fs::path& out) {
  exp::ExperimentConfig c;
  c.toy_classes = 4;
  c.toy_train_per_class = 40;
  c.toy_test_per_class = 10;
  c.toy_size = 8;
  c.clients = 3;
  c.model = "toy-cnn";
  c.batch_size = 16;
  c.lr = 0.05;
  c.eta = 0.2;
  c.modulus_bits = 256;
  c.repetitions = 1;
  c.master_seed = 101;
  c.max_rounds = 5;
  c.output_dir = out.string();
  c.name = name;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("heintfl_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config round-trips through INI losslessly") {
  exp::ExperimentConfig c = tiny_config("roundtrip", "out");
  c.alpha = 0.37;
  c.lr = 0.0123456789012345;
  c.trace_rounds = {3, 9, 27};
  c.stop_rule = "convergence";
  c.epsilon = 0.1;

  const std::string ini = exp::to_ini(c);
  const auto parsed = exp::from_ini(ini);
  CHECK(exp::to_ini(parsed) == ini);  // byte-identical second serialization
  CHECK(parsed.alpha == c.alpha);
  CHECK(parsed.lr == c.lr);
  CHECK(parsed.trace_rounds == c.trace_rounds);
}

TEST_CASE("config validation rejects bad values and unknown keys") {
  auto c = tiny_config("bad", "out");
  c.eta = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  CHECK_THROWS_AS(exp::from_ini("[dataset]\nbogus_key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(exp::from_ini("[schedule]\nrho_syn = 2\nrho_tot = 2\n"), std::invalid_argument);
}

TEST_CASE("prepare_data produces disjoint authentic/synthetic client sets") {
  const auto c = tiny_config("prep", "out");
  const auto prepared = exp::prepare_data(c, 0);
  REQUIRE(prepared.clients.size() == 3);
  CHECK(prepared.test_set.size() == 40);  // 4 classes x 10

  std::size_t auth_total = 0, syn_total = 0;
  for (const auto& client : prepared.clients) {
    CHECK(!client.authentic.empty());
    CHECK(!client.synthetic.empty());
    auth_total += client.authentic.size();
    syn_total += client.synthetic.size();
  }
  CHECK(auth_total + syn_total == 160);  // 4 x 40 training samples
  CHECK(auth_total == 80);
  CHECK(syn_total == 80);

  // reproducibility per (config, rep)
  const auto again = exp::prepare_data(c, 0);
  CHECK(again.clients[1].authentic.size() == prepared.clients[1].authentic.size());
  for (std::size_t i = 0; i < prepared.clients[1].authentic.size(); ++i) {
    CHECK(again.clients[1].authentic[i].pixels.values ==
          prepared.clients[1].authentic[i].pixels.values);
  }
}

TEST_CASE("cmd_train writes a self-describing run directory") {
  TempDir tmp("train");
  auto c = tiny_config("basic", tmp.path);
  c.trace_rounds = {1, 2};
  const auto dirs = exp::cmd_train(c);
  REQUIRE(dirs.size() == 1);
  const fs::path rep = dirs[0];

  CHECK(fs::exists(rep / "config.ini"));
  CHECK(fs::exists(rep / "history.csv"));
  CHECK(fs::exists(rep / "ledger.csv"));
  CHECK(fs::exists(rep / "summary.json"));
  CHECK(fs::exists(rep / "pubkey.bin"));
  CHECK(fs::exists(rep / "trace" / "round_00001.bin"));
  CHECK(fs::exists(rep / "trace" / "round_00002.bin"));

  // 5-round run -> header + 5 rows
  const auto history = slurp(rep / "history.csv");
  CHECK(std::count(history.begin(), history.end(), '\n') == 6);

  const auto loaded = exp::load_run(rep);
  CHECK(loaded.config.resolved_rep == 0);
  CHECK(loaded.history.size() == 5);
  CHECK(loaded.ledger.rows.size() == 5);
}

TEST_CASE("rerunning the same config is byte-identical on deterministic artifacts") {
  TempDir tmp("determinism");
  auto c = tiny_config("det", tmp.path);

  const auto first = exp::cmd_train(c)[0];
  const std::string history1 = slurp(first / "history.csv");
  const std::string config1 = slurp(first / "config.ini");
  const auto ledger1 = exp::load_run(first).ledger;

  auto c2 = c;
  c2.name = "det2";
  const auto second = exp::cmd_train(c2)[0];
  CHECK(slurp(second / "history.csv") == history1);

  // ledger: all columns except wall-clock times match exactly
  const auto ledger2 = exp::load_run(second).ledger;
  REQUIRE(ledger1.rows.size() == ledger2.rows.size());
  for (std::size_t i = 0; i < ledger1.rows.size(); ++i) {
    CHECK(ledger1.rows[i].plaintext_bytes_sent == ledger2.rows[i].plaintext_bytes_sent);
    CHECK(ledger1.rows[i].ciphertext_bytes_sent == ledger2.rows[i].ciphertext_bytes_sent);
    CHECK(ledger1.rows[i].broadcast_plain_bytes == ledger2.rows[i].broadcast_plain_bytes);
    CHECK(ledger1.rows[i].broadcast_cipher_bytes == ledger2.rows[i].broadcast_cipher_bytes);
    CHECK(ledger1.rows[i].enc_ops == ledger2.rows[i].enc_ops);
    CHECK(ledger1.rows[i].dec_ops == ledger2.rows[i].dec_ops);
  }
}

TEST_CASE("cmd_train refuses to overwrite finished repetitions") {
  TempDir tmp("overwrite");
  auto c = tiny_config("no_overwrite", tmp.path);
  exp::cmd_train(c);
  CHECK_THROWS_AS(exp::cmd_train(c), std::runtime_error);
}

TEST_CASE("alternating schedule shows in the ledger CSV") {
  TempDir tmp("sched");
  auto c = tiny_config("alt", tmp.path);
  c.rho_syn = 1;
  c.rho_tot = 2;
  c.max_rounds = 6;
  const auto rep = exp::cmd_train(c)[0];
  const auto loaded = exp::load_run(rep);
  for (std::size_t t = 0; t < loaded.ledger.rows.size(); ++t) {
    CHECK(loaded.ledger.rows[t].is_authentic == (t % 2 == 0));
  }
}

TEST_CASE("cmd_attack consumes traces and writes reports and image dumps") {
  TempDir tmp("attack");
  auto c = tiny_config("atk", tmp.path);
  c.max_rounds = 4;
  c.rho_syn = 1;
  c.rho_tot = 2;
  c.trace_rounds = {2, 3};
  const auto rep = exp::cmd_train(c)[0];

  attack::DlgOptions dlg;
  dlg.iterations = 6;  // artifact plumbing check, not recovery quality
  const auto out = exp::cmd_attack(rep, {2, 3}, 1, 9, dlg);
  CHECK(fs::exists(out / "attack_report.csv"));
  CHECK(fs::exists(out / "attack_summary.json"));
  CHECK(fs::exists(out / "images"));

  const auto csv = slurp(out / "attack_report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8);  // 2 rounds x 4 classes x 1 image

  int pgm_count = 0;
  for (const auto& entry : fs::directory_iterator(out / "images")) {
    if (entry.path().extension() == ".pgm") ++pgm_count;
  }
  CHECK(pgm_count == 8);

  // attacking a round without a trace errors
  CHECK_THROWS_AS(exp::cmd_attack(rep, {1}, 1, 9, dlg), std::runtime_error);

  // empty round list -> empty report
  const auto empty_out = exp::cmd_attack(rep, {}, 1, 9, dlg);
  const auto empty_csv = slurp(empty_out / "attack_report.csv");
  CHECK(std::count(empty_csv.begin(), empty_csv.end(), '\n') == 1);
}

TEST_CASE("cmd_report aggregates run directories against a baseline") {
  TempDir tmp("report");
  auto base = tiny_config("rho0", tmp.path);
  base.repetitions = 3;
  base.max_rounds = 4;
  exp::cmd_train(base);

  auto inter = tiny_config("rho05", tmp.path);
  inter.repetitions = 3;
  inter.max_rounds = 4;
  inter.rho_syn = 1;
  inter.rho_tot = 2;
  exp::cmd_train(inter);

  const fs::path out = tmp.path / "report";
  const auto report = exp::cmd_report({tmp.path / "rho0", tmp.path / "rho05"},
                                      tmp.path / "rho0", out);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[report.baseline_index].rho == 0.0);
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "accuracy_curves.csv"));
  CHECK(fs::exists(out / "accuracy.svg"));

  // three run dirs with rho 0, 0.25, 0.5 -> deltas vs rho=0 row
  const auto& other = report.rows[1 - report.baseline_index];
  CHECK(other.rho == 0.5);
  CHECK(other.delta.ciphertext_mb < 0.0);  // half the authentic rounds

  CHECK_THROWS_AS(exp::cmd_report({tmp.path / "rho05"}, tmp.path / "rho0", out),
                  std::invalid_argument);
}

TEST_CASE("trace files round-trip") {
  TempDir tmp("trace");
  fl::RoundTrace t;
  t.round = 17;
  t.is_authentic = true;
  t.incoming_broadcast = {1, 2, 3, 4, 5};
  t.client_uploads = {{9, 8}, {7}, {}};
  t.model_in_plain = {0.5, -1.25, 3.75};
  const fs::path p = tmp.path / "t.bin";
  exp::write_trace(p, t);
  const auto back = exp::read_trace(p);
  CHECK(back.round == 17);
  CHECK(back.is_authentic);
  CHECK(back.incoming_broadcast == t.incoming_broadcast);
  CHECK(back.client_uploads == t.client_uploads);
  CHECK(back.model_in_plain == t.model_in_plain);
}

TEST_CASE("public key files round-trip") {
  TempDir tmp("pubkey");
  const auto key = crypto::keygen(31, crypto::SchemeParams{256, 40, 32});
  const fs::path p = tmp.path / "pk.bin";
  exp::write_public_key(p, *key.pub);
  const auto pk = exp::read_public_key(p);
  CHECK(pk->key_id == key.pub->key_id);
  CHECK(mpz_cmp(pk->n.get(), key.pub->n.get()) == 0);
  CHECK(pk->params.modulus_bits == 256);
}
