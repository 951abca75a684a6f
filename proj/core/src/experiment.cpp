#include "heintfl/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "heintfl/convergence.hpp"
#include "heintfl/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace heintfl::exp {

const char* kOutputRootEnv = "HEINTFL_OUTPUT_ROOT";

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_rounds(const std::vector<std::int64_t>& rounds) {
  std::string out;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(rounds[i]);
  }
  return out;
}

std::vector<std::int64_t> parse_rounds(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoll(tok));
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: expected boolean, got '" + v + "'");
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// -- binary artifact helpers ------------------------------------------------

void put_u64(std::ofstream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>(v >> (8 * i));
  out.write(buf, 8);
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw std::runtime_error("truncated artifact file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_blob(std::ofstream& out, const std::vector<std::uint8_t>& blob) {
  put_u64(out, blob.size());
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
}

std::vector<std::uint8_t> get_blob(std::ifstream& in) {
  const std::uint64_t n = get_u64(in);
  std::vector<std::uint8_t> blob(n);
  if (!in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("truncated artifact file");
  }
  return blob;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (source != "toy" && source != "cifar10") {
    throw std::invalid_argument("config: dataset source must be 'toy' or 'cifar10'");
  }
  if (source == "cifar10" && (cifar_train.empty() || cifar_test.empty())) {
    throw std::invalid_argument("config: cifar10 source needs cifar_train and cifar_test paths");
  }
  if (toy_classes < 2 || toy_train_per_class < 1 || toy_test_per_class < 1 || toy_size < 8) {
    throw std::invalid_argument("config: invalid toy dataset parameters");
  }
  if (clients < 2) throw std::invalid_argument("config: need at least 2 clients");
  if (!(alpha > 0.0)) throw std::invalid_argument("config: alpha must be positive");
  if (local_epochs < 0 || batch_size < 1 || !(lr > 0.0)) {
    throw std::invalid_argument("config: invalid training hyperparameters");
  }
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("config: eta must be in [0,1]");
  fl::RoundSchedule{rho_syn, rho_tot}.validate();
  crypto::SchemeParams{modulus_bits, value_scale_bits, weight_scale_bits}.validate();
  if (repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
  if (max_rounds < 1) throw std::invalid_argument("config: max_rounds must be >= 1");
  if (name.empty() || name.find('/') != std::string::npos) {
    throw std::invalid_argument("config: run name must be a non-empty path component");
  }
  if (stop_rule != "fixed" && stop_rule != "convergence") {
    throw std::invalid_argument("config: stopping rule must be 'fixed' or 'convergence'");
  }
  analysis::ConvergenceRule{window, epsilon, patience}.validate();
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[dataset]\n";
  out << "source = " << c.source << "\n";
  out << "cifar_train = " << c.cifar_train << "\n";
  out << "cifar_test = " << c.cifar_test << "\n";
  out << "toy_classes = " << c.toy_classes << "\n";
  out << "toy_train_per_class = " << c.toy_train_per_class << "\n";
  out << "toy_test_per_class = " << c.toy_test_per_class << "\n";
  out << "toy_size = " << c.toy_size << "\n";
  out << "toy_noise = " << fmt_double(c.toy_noise) << "\n";
  out << "\n[federation]\n";
  out << "clients = " << c.clients << "\n";
  out << "alpha = " << fmt_double(c.alpha) << "\n";
  out << "\n[model]\n";
  out << "spec = " << c.model << "\n";
  out << "\n[training]\n";
  out << "local_epochs = " << c.local_epochs << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "lr = " << fmt_double(c.lr) << "\n";
  out << "\n[crypto]\n";
  out << "eta = " << fmt_double(c.eta) << "\n";
  out << "modulus_bits = " << c.modulus_bits << "\n";
  out << "value_scale_bits = " << c.value_scale_bits << "\n";
  out << "weight_scale_bits = " << c.weight_scale_bits << "\n";
  out << "mask_from_sensitivity = " << (c.mask_from_sensitivity ? "true" : "false") << "\n";
  out << "\n[schedule]\n";
  out << "rho_syn = " << c.rho_syn << "\n";
  out << "rho_tot = " << c.rho_tot << "\n";
  out << "\n[run]\n";
  out << "repetitions = " << c.repetitions << "\n";
  out << "master_seed = " << c.master_seed << "\n";
  out << "max_rounds = " << c.max_rounds << "\n";
  out << "output_dir = " << c.output_dir << "\n";
  out << "name = " << c.name << "\n";
  out << "trace_rounds = " << fmt_rounds(c.trace_rounds) << "\n";
  out << "snapshot_rounds = " << fmt_rounds(c.snapshot_rounds) << "\n";
  out << "parallel_clients = " << (c.parallel_clients ? "true" : "false") << "\n";
  out << "\n[stopping]\n";
  out << "rule = " << c.stop_rule << "\n";
  out << "window = " << c.window << "\n";
  out << "epsilon = " << fmt_double(c.epsilon) << "\n";
  out << "patience = " << c.patience << "\n";
  if (c.resolved_rep >= 0) {
    out << "\n[resolved]\n";
    out << "rep = " << c.resolved_rep << "\n";
    out << "run_seed = " << c.resolved_run_seed << "\n";
  }
  return out.str();
}

ExperimentConfig from_ini(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "dataset.source") c.source = val;
    else if (qual == "dataset.cifar_train") c.cifar_train = val;
    else if (qual == "dataset.cifar_test") c.cifar_test = val;
    else if (qual == "dataset.toy_classes") c.toy_classes = std::stoi(val);
    else if (qual == "dataset.toy_train_per_class") c.toy_train_per_class = std::stoi(val);
    else if (qual == "dataset.toy_test_per_class") c.toy_test_per_class = std::stoi(val);
    else if (qual == "dataset.toy_size") c.toy_size = std::stoi(val);
    else if (qual == "dataset.toy_noise") c.toy_noise = std::stod(val);
    else if (qual == "federation.clients") c.clients = std::stoi(val);
    else if (qual == "federation.alpha") c.alpha = std::stod(val);
    else if (qual == "model.spec") c.model = val;
    else if (qual == "training.local_epochs") c.local_epochs = std::stoi(val);
    else if (qual == "training.batch_size") c.batch_size = std::stoi(val);
    else if (qual == "training.lr") c.lr = std::stod(val);
    else if (qual == "crypto.eta") c.eta = std::stod(val);
    else if (qual == "crypto.modulus_bits") c.modulus_bits = std::stoi(val);
    else if (qual == "crypto.value_scale_bits") c.value_scale_bits = std::stoi(val);
    else if (qual == "crypto.weight_scale_bits") c.weight_scale_bits = std::stoi(val);
    else if (qual == "crypto.mask_from_sensitivity") c.mask_from_sensitivity = parse_bool(val);
    else if (qual == "schedule.rho_syn") c.rho_syn = std::stoi(val);
    else if (qual == "schedule.rho_tot") c.rho_tot = std::stoi(val);
    else if (qual == "run.repetitions") c.repetitions = std::stoi(val);
    else if (qual == "run.master_seed") c.master_seed = std::stoull(val);
    else if (qual == "run.max_rounds") c.max_rounds = std::stoll(val);
    else if (qual == "run.output_dir") c.output_dir = val;
    else if (qual == "run.name") c.name = val;
    else if (qual == "run.trace_rounds") c.trace_rounds = parse_rounds(val);
    else if (qual == "run.snapshot_rounds") c.snapshot_rounds = parse_rounds(val);
    else if (qual == "run.parallel_clients") c.parallel_clients = parse_bool(val);
    else if (qual == "stopping.rule") c.stop_rule = val;
    else if (qual == "stopping.window") c.window = std::stoi(val);
    else if (qual == "stopping.epsilon") c.epsilon = std::stod(val);
    else if (qual == "stopping.patience") c.patience = std::stoi(val);
    else if (qual == "resolved.rep") c.resolved_rep = std::stoi(val);
    else if (qual == "resolved.run_seed") c.resolved_run_seed = std::stoull(val);
    else throw std::invalid_argument("config: unknown key '" + qual + "'");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) { return from_ini(read_file(path)); }

void save_config(const fs::path& path, const ExperimentConfig& config) {
  write_file(path, to_ini(config));
}

PreparedData prepare_data(const ExperimentConfig& config, int rep) {
  config.validate();
  const auto r = static_cast<std::uint64_t>(rep);

  PreparedData out;
  std::vector<data::LabeledImage> train_pool;
  if (config.source == "toy") {
    const int per_class = config.toy_train_per_class + config.toy_test_per_class;
    data::ToyDatasetOptions topt;
    topt.noise = config.toy_noise;
    const auto pool = data::make_toy_dataset(config.toy_classes, per_class, config.toy_size,
                                             derive_seed(config.master_seed, "toy-data", r), topt);
    // per class: leading samples train, trailing samples test
    for (int cls = 0; cls < config.toy_classes; ++cls) {
      const std::size_t base = static_cast<std::size_t>(cls) * per_class;
      for (int i = 0; i < config.toy_train_per_class; ++i) {
        train_pool.push_back(pool[base + static_cast<std::size_t>(i)]);
      }
      for (int i = config.toy_train_per_class; i < per_class; ++i) {
        out.test_set.push_back(pool[base + static_cast<std::size_t>(i)]);
      }
    }
    out.input_shape = {1, config.toy_size, config.toy_size};
    out.num_classes = config.toy_classes;
  } else {
    train_pool = data::load_cifar10_binary(config.cifar_train);
    out.test_set = data::load_cifar10_binary(config.cifar_test);
    out.input_shape = {3, 32, 32};
    out.num_classes = 10;
  }

  auto [authentic_pool, synthetic_pool] =
      data::split_authentic_synthetic(train_pool, derive_seed(config.master_seed, "half-split", r));
  const auto auth_plan = data::partition_dirichlet(
      authentic_pool, config.clients, config.alpha,
      derive_seed(config.master_seed, "dirichlet", r));
  const auto syn_plan = data::partition_iid(synthetic_pool, config.clients,
                                            derive_seed(config.master_seed, "iid", r));
  auto auth_lists = data::apply_plan(authentic_pool, auth_plan);
  auto syn_lists = data::apply_plan(synthetic_pool, syn_plan);

  out.clients.resize(static_cast<std::size_t>(config.clients));
  for (int i = 0; i < config.clients; ++i) {
    out.clients[static_cast<std::size_t>(i)].client_id = i;
    out.clients[static_cast<std::size_t>(i)].authentic = std::move(auth_lists[static_cast<std::size_t>(i)]);
    out.clients[static_cast<std::size_t>(i)].synthetic = std::move(syn_lists[static_cast<std::size_t>(i)]);
  }
  return out;
}

fs::path output_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return fs::path(env);
  return fs::path(config.output_dir);
}

namespace {

void write_history_csv(const fs::path& path, const std::vector<fl::RoundRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "round,is_authentic,test_accuracy\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.10g\n", static_cast<long long>(r.round),
                  r.is_authentic ? 1 : 0, r.test_accuracy);
    out << buf;
  }
}

std::vector<fl::RoundRecord> read_history_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<fl::RoundRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    out.push_back({std::stoll(a), std::stoi(b) != 0, std::stod(c)});
  }
  return out;
}

fl::CostLedger read_ledger_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  fl::CostLedger ledger;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cols;
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 12) throw std::runtime_error("ledger.csv: expected 12 columns");
    fl::LedgerRow r;
    r.round = std::stoll(cols[0]);
    r.is_authentic = std::stoi(cols[1]) != 0;
    r.plaintext_bytes_sent = std::stoll(cols[2]);
    r.ciphertext_bytes_sent = std::stoll(cols[3]);
    r.broadcast_plain_bytes = std::stoll(cols[4]);
    r.broadcast_cipher_bytes = std::stoll(cols[5]);
    r.enc_ops = std::stoll(cols[6]);
    r.dec_ops = std::stoll(cols[7]);
    r.enc_time_s = std::stod(cols[8]);
    r.dec_time_s = std::stod(cols[9]);
    r.train_time_s = std::stod(cols[10]);
    r.agg_time_s = std::stod(cols[11]);
    ledger.rows.push_back(r);
  }
  return ledger;
}

void write_snapshot(const fs::path& path, const nn::ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("HIMS", 4);
  put_u64(out, params.flat.size());
  out.write(reinterpret_cast<const char*>(params.flat.data()),
            static_cast<std::streamsize>(params.flat.size() * sizeof(double)));
}

}  // namespace

void write_trace(const fs::path& path, const fl::RoundTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("HITR", 4);
  put_u64(out, static_cast<std::uint64_t>(trace.round));
  out.put(trace.is_authentic ? 1 : 0);
  put_blob(out, trace.incoming_broadcast);
  put_u64(out, trace.client_uploads.size());
  for (const auto& u : trace.client_uploads) put_blob(out, u);
  put_u64(out, trace.model_in_plain.size());
  out.write(reinterpret_cast<const char*>(trace.model_in_plain.data()),
            static_cast<std::streamsize>(trace.model_in_plain.size() * sizeof(double)));
}

fl::RoundTrace read_trace(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "HITR") {
    throw std::runtime_error("bad trace file: " + path.string());
  }
  fl::RoundTrace trace;
  trace.round = static_cast<std::int64_t>(get_u64(in));
  trace.is_authentic = in.get() != 0;
  trace.incoming_broadcast = get_blob(in);
  const std::uint64_t n = get_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) trace.client_uploads.push_back(get_blob(in));
  const std::uint64_t m = get_u64(in);
  trace.model_in_plain.resize(m);
  if (!in.read(reinterpret_cast<char*>(trace.model_in_plain.data()),
               static_cast<std::streamsize>(m * sizeof(double)))) {
    throw std::runtime_error("truncated trace file: " + path.string());
  }
  return trace;
}

void write_public_key(const fs::path& path, const crypto::PublicKey& pk) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("HIPK", 4);
  put_u64(out, static_cast<std::uint64_t>(pk.params.modulus_bits));
  put_u64(out, static_cast<std::uint64_t>(pk.params.value_scale_bits));
  put_u64(out, static_cast<std::uint64_t>(pk.params.weight_scale_bits));
  std::uint64_t max_bits;
  std::memcpy(&max_bits, &pk.params.max_value, sizeof(max_bits));
  put_u64(out, max_bits);
  put_u64(out, pk.key_id);
  std::vector<std::uint8_t> n_bytes(static_cast<std::size_t>(pk.params.modulus_bits / 8));
  crypto::export_slot(pk.n, n_bytes.data(), static_cast<int>(n_bytes.size()));
  put_blob(out, n_bytes);
}

std::shared_ptr<const crypto::PublicKey> read_public_key(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "HIPK") {
    throw std::runtime_error("bad public key file: " + path.string());
  }
  auto pk = std::make_shared<crypto::PublicKey>();
  pk->params.modulus_bits = static_cast<int>(get_u64(in));
  pk->params.value_scale_bits = static_cast<int>(get_u64(in));
  pk->params.weight_scale_bits = static_cast<int>(get_u64(in));
  const std::uint64_t max_bits = get_u64(in);
  std::memcpy(&pk->params.max_value, &max_bits, sizeof(max_bits));
  pk->key_id = get_u64(in);
  const auto n_bytes = get_blob(in);
  pk->n = crypto::import_slot(n_bytes.data(), static_cast<int>(n_bytes.size()));
  mpz_mul(pk->n_square.get(), pk->n.get(), pk->n.get());
  return pk;
}

std::vector<fs::path> cmd_train(const ExperimentConfig& config) {
  config.validate();
  const fs::path base = output_root(config) / config.name;
  fs::create_directories(base);
  save_config(base / "config.ini", config);

  std::vector<fs::path> rep_dirs;
  for (int rep = 0; rep < config.repetitions; ++rep) {
    char repname[32];
    std::snprintf(repname, sizeof(repname), "rep_%03d", rep);
    const fs::path dir = base / repname;
    if (fs::exists(dir / "summary.json")) {
      throw std::runtime_error("cmd_train: refusing to overwrite existing run at " + dir.string());
    }
    fs::create_directories(dir);

    const auto prepared = prepare_data(config, rep);
    fl::RunConfig run;
    run.spec = nn::model_spec_by_name(config.model, prepared.input_shape, prepared.num_classes);
    run.clients = prepared.clients;
    run.test_set = prepared.test_set;
    run.schedule = {config.rho_syn, config.rho_tot};
    run.eta = config.eta;
    run.scheme = crypto::SchemeParams{config.modulus_bits, config.value_scale_bits,
                                      config.weight_scale_bits};
    run.hp = {config.local_epochs, config.batch_size, config.lr};
    run.master_seed = derive_seed(config.master_seed, "rep-run", static_cast<std::uint64_t>(rep));
    run.max_rounds = config.max_rounds;
    if (config.stop_rule == "convergence") {
      run.stop_rule = analysis::ConvergenceRule{config.window, config.epsilon, config.patience};
    }
    run.mask_from_sensitivity = config.mask_from_sensitivity;
    run.trace_rounds = config.trace_rounds;
    run.snapshot_rounds = config.snapshot_rounds;
    run.parallel_clients = config.parallel_clients;

    const auto result = fl::run_training(run);

    ExperimentConfig resolved = config;
    resolved.resolved_rep = rep;
    resolved.resolved_run_seed = run.master_seed;
    save_config(dir / "config.ini", resolved);

    write_history_csv(dir / "history.csv", result.history);
    {
      std::ofstream out(dir / "ledger.csv", std::ios::binary);
      result.ledger.write_csv(out);
    }
    write_public_key(dir / "pubkey.bin", *result.public_key);
    if (!result.traces.empty()) {
      fs::create_directories(dir / "trace");
      for (const auto& t : result.traces) {
        char fname[48];
        std::snprintf(fname, sizeof(fname), "round_%05lld.bin", static_cast<long long>(t.round));
        write_trace(dir / "trace" / fname, t);
      }
    }
    if (!result.snapshots.empty()) {
      fs::create_directories(dir / "snapshots");
      for (const auto& [round, params] : result.snapshots) {
        char fname[48];
        std::snprintf(fname, sizeof(fname), "round_%05lld.bin", static_cast<long long>(round));
        write_snapshot(dir / "snapshots" / fname, params);
      }
    }

    const auto totals = result.ledger.totals();
    std::vector<double> acc;
    for (const auto& r : result.history) acc.push_back(r.test_accuracy);
    ordered_json summary;
    summary["name"] = config.name;
    summary["rep"] = rep;
    summary["run_seed"] = run.master_seed;
    summary["rho_syn"] = config.rho_syn;
    summary["rho_tot"] = config.rho_tot;
    summary["rho"] = config.rho();
    summary["eta"] = config.eta;
    summary["clients"] = config.clients;
    summary["model"] = config.model;
    summary["param_count"] = result.final_params.flat.size();
    summary["rounds_executed"] = result.history.size();
    if (result.converged_round) {
      summary["converged_round"] = *result.converged_round;
      summary["rounds_to_convergence"] = *result.converged_round + 1;
    } else {
      summary["converged_round"] = nullptr;
      summary["rounds_to_convergence"] = result.history.size();
    }
    summary["final_accuracy"] = result.history.back().test_accuracy;
    summary["smoothed_accuracy"] = analysis::smooth_series(acc, config.window).back();
    summary["totals"] = {
        {"plaintext_bytes_sent", totals.plaintext_bytes_sent},
        {"ciphertext_bytes_sent", totals.ciphertext_bytes_sent},
        {"broadcast_plain_bytes", totals.broadcast_plain_bytes},
        {"broadcast_cipher_bytes", totals.broadcast_cipher_bytes},
        {"enc_ops", totals.enc_ops},
        {"dec_ops", totals.dec_ops},
        {"enc_time_s", totals.enc_time_s},
        {"dec_time_s", totals.dec_time_s},
        {"train_time_s", totals.train_time_s},
        {"agg_time_s", totals.agg_time_s},
    };
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    rep_dirs.push_back(dir);
  }
  return rep_dirs;
}

LoadedRun load_run(const fs::path& rep_dir) {
  LoadedRun out;
  out.config = load_config(rep_dir / "config.ini");
  out.history = read_history_csv(rep_dir / "history.csv");
  out.ledger = read_ledger_csv(rep_dir / "ledger.csv");
  const auto summary = ordered_json::parse(read_file(rep_dir / "summary.json"));
  if (!summary["converged_round"].is_null()) {
    out.converged_round = summary["converged_round"].get<std::int64_t>();
  }
  return out;
}

fs::path cmd_attack(const fs::path& rep_dir, const std::vector<std::int64_t>& rounds,
                    int images_per_class, std::uint64_t seed, const attack::DlgOptions& dlg) {
  if (images_per_class < 1) throw std::invalid_argument("cmd_attack: images_per_class must be >= 1");
  const auto run = load_run(rep_dir);
  if (run.config.resolved_rep < 0) {
    throw std::runtime_error("cmd_attack: config.ini is not a resolved repetition config");
  }

  attack::AttackRunArtifacts artifacts;
  const auto prepared = prepare_data(run.config, run.config.resolved_rep);
  artifacts.spec =
      nn::model_spec_by_name(run.config.model, prepared.input_shape, prepared.num_classes);
  artifacts.clients = prepared.clients;
  artifacts.client_lr = run.config.lr;
  artifacts.pk = read_public_key(rep_dir / "pubkey.bin");

  for (std::int64_t round : rounds) {
    char fname[48];
    std::snprintf(fname, sizeof(fname), "round_%05lld.bin", static_cast<long long>(round));
    const fs::path tp = rep_dir / "trace" / fname;
    if (!fs::exists(tp)) {
      throw std::runtime_error("cmd_attack: missing trace for round " + std::to_string(round) +
                               " (was it in trace_rounds?)");
    }
    artifacts.traces.push_back(read_trace(tp));
  }
  if (!artifacts.traces.empty()) {
    const auto first =
        crypto::deserialize_masked(artifacts.traces.front().incoming_broadcast, artifacts.pk);
    artifacts.mask = first.mask;
  }

  attack::SweepOptions opts;
  opts.images_per_class = images_per_class;
  opts.dlg = dlg;
  opts.seed = seed;
  const auto table = attack::score_attack_sweep(artifacts, rounds, opts);

  const fs::path out_dir = rep_dir / "attack";
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "attack_report.csv", std::ios::binary);
    attack::write_attack_csv(out, table);
  }
  ordered_json rounds_json = ordered_json::array();
  for (const auto& s : table.per_round) {
    rounds_json.push_back({{"round", s.round},
                           {"is_authentic", s.is_authentic},
                           {"images", s.images},
                           {"max", {{"uqi", s.max_uqi}, {"msssim", s.max_msssim}, {"vif", s.max_vif}}},
                           {"avg", {{"uqi", s.avg_uqi}, {"msssim", s.avg_msssim}, {"vif", s.avg_vif}}}});
  }
  ordered_json summary;
  summary["seed"] = seed;
  summary["images_per_class"] = images_per_class;
  summary["iterations"] = dlg.iterations;
  summary["rounds"] = rounds_json;
  write_file(out_dir / "attack_summary.json", summary.dump(2) + "\n");

  fs::create_directories(out_dir / "images");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "round_%05lld_img_%03d.pgm",
                  static_cast<long long>(table.rows[i].round), table.rows[i].image_id);
    const auto& img = table.recovered[i];
    if (img.shape[0] == 3) {
      std::snprintf(fname, sizeof(fname), "round_%05lld_img_%03d.ppm",
                    static_cast<long long>(table.rows[i].round), table.rows[i].image_id);
    }
    attack::write_pnm((out_dir / "images" / fname).string(), img);
  }
  return out_dir;
}

analysis::ExperimentReport cmd_report(const std::vector<fs::path>& run_dirs,
                                      const fs::path& baseline, const fs::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("cmd_report: no run directories");
  std::vector<analysis::RunRecordSet> runs;
  std::vector<std::pair<std::string, std::vector<double>>> curves;

  bool baseline_seen = false;
  for (const auto& dir : run_dirs) {
    const bool is_baseline = fs::weakly_canonical(dir) == fs::weakly_canonical(baseline);
    baseline_seen = baseline_seen || is_baseline;

    std::vector<fs::path> reps;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("rep_", 0) == 0) {
        reps.push_back(entry.path());
      }
    }
    std::sort(reps.begin(), reps.end());
    if (reps.empty()) throw std::runtime_error("cmd_report: no repetitions under " + dir.string());

    bool first_rep = true;
    for (const auto& rep : reps) {
      const auto loaded = load_run(rep);
      analysis::RunRecordSet rec;
      rec.rho = loaded.config.rho();
      rec.eta = loaded.config.eta;
      rec.num_clients = loaded.config.clients;
      rec.smoothing_window = loaded.config.window;
      rec.is_baseline = is_baseline;
      rec.history = loaded.history;
      rec.ledger = loaded.ledger;
      rec.converged_round = loaded.converged_round;
      if (first_rep) {
        std::vector<double> acc;
        for (const auto& r : loaded.history) acc.push_back(r.test_accuracy);
        curves.emplace_back(dir.filename().string(),
                            analysis::smooth_series(acc, loaded.config.window));
        first_rep = false;
      }
      runs.push_back(std::move(rec));
    }
  }
  if (!baseline_seen) throw std::invalid_argument("cmd_report: baseline directory not in run set");

  const auto report = analysis::build_report(runs);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "report.csv", std::ios::binary);
    analysis::write_report_csv(out, report);
  }
  {
    std::ofstream out(out_dir / "report.txt", std::ios::binary);
    analysis::write_report_table(out, report);
  }
  {
    std::ofstream out(out_dir / "accuracy_curves.csv", std::ios::binary);
    out << "series,round,smoothed_accuracy\n";
    char buf[160];
    for (const auto& [name, values] : curves) {
      for (std::size_t t = 0; t < values.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.10g\n", name.c_str(), t, values[t]);
        out << buf;
      }
    }
  }
  write_accuracy_svg(out_dir / "accuracy.svg", curves);
  return report;
}

void write_accuracy_svg(const fs::path& path,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int width = 640, height = 400, margin = 48;
  std::size_t max_rounds = 1;
  for (const auto& [_, v] : series) max_rounds = std::max(max_rounds, v.size());

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = height - margin - (height - 2.0 * margin) * tick / 100.0;
    svg << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"11\">" << tick << "</text>\n";
    svg << "<line x1=\"" << margin - 3 << "\" y1=\"" << y << "\" x2=\"" << margin << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
  }
  svg << "<text x=\"" << width / 2 - 20 << "\" y=\"" << height - 10
      << "\" font-size=\"12\">round</text>\n";
  svg << "<text x=\"10\" y=\"" << margin - 10 << "\" font-size=\"12\">accuracy [%]</text>\n";

  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  int color = 0;
  for (const auto& [name, values] : series) {
    if (values.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << palette[color % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < values.size(); ++t) {
      const double x = margin + (width - 2.0 * margin) * (max_rounds == 1 ? 0.0 : static_cast<double>(t) / (max_rounds - 1));
      const double y = height - margin - (height - 2.0 * margin) * std::clamp(values[t], 0.0, 100.0) / 100.0;
      svg << x << "," << y << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << width - margin - 120 << "\" y=\"" << margin + 16 * color
        << "\" font-size=\"12\" fill=\"" << palette[color % 6] << "\">" << name << "</text>\n";
    ++color;
  }
  svg << "</svg>\n";
  write_file(path, svg.str());
}

}  // namespace heintfl::exp
