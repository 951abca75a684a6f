#include "heintfl/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "heintfl/rng.hpp"

namespace heintfl::fl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nn::ModelParams params_from_flat(std::vector<double> flat, const std::vector<nn::ParamBlock>& layout) {
  nn::ModelParams p;
  p.flat = std::move(flat);
  p.layout = layout;
  return p;
}

// Mean absolute parameter gradient over one probe batch per client, averaged
// server-side; drives the sensitivity-based mask.
std::vector<double> sensitivity_profile(const nn::ModelSpec& spec, const nn::ModelParams& params,
                                        const std::vector<data::ClientDataset>& clients,
                                        int batch_size) {
  std::vector<double> acc(params.flat.size(), 0.0);
  int contributors = 0;
  const std::int64_t sample_size = Tensor::element_count(spec.input_shape);
  for (const auto& client : clients) {
    const auto& ds = client.authentic.empty() ? client.synthetic : client.authentic;
    if (ds.empty()) continue;
    const std::size_t count = std::min<std::size_t>(ds.size(), static_cast<std::size_t>(batch_size));
    std::vector<int> bshape{static_cast<int>(count)};
    bshape.insert(bshape.end(), spec.input_shape.begin(), spec.input_shape.end());
    Tensor batch = Tensor::zeros(bshape);
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(ds[i].pixels.values.begin(), ds[i].pixels.values.end(),
                batch.values.begin() + static_cast<std::int64_t>(i) * sample_size);
      labels[i] = ds[i].label;
    }
    nn::ForwardCache cache;
    nn::forward(spec, params, batch, &cache);
    nn::Gradient grad;
    nn::backward(spec, params, cache, labels, grad);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(grad.flat[i]);
    ++contributors;
  }
  if (contributors == 0) throw std::invalid_argument("sensitivity_profile: all clients empty");
  for (auto& v : acc) v /= contributors;
  return acc;
}

}  // namespace

void RoundSchedule::validate() const {
  if (rho_tot < 1) throw std::invalid_argument("RoundSchedule: rho_tot must be positive");
  if (rho_syn < 0 || rho_syn >= rho_tot) {
    throw std::invalid_argument("RoundSchedule: need 0 <= rho_syn < rho_tot");
  }
}

bool is_authentic_round(std::int64_t t, const RoundSchedule& sched) {
  sched.validate();
  if (t < 0) throw std::invalid_argument("is_authentic_round: negative round");
  return (t % sched.rho_tot) < (sched.rho_tot - sched.rho_syn);
}

crypto::MaskedModel client_round(const nn::ModelSpec& spec, ClientState& state,
                                 const crypto::MaskedModel& incoming, bool is_auth,
                                 const crypto::EncryptionMask& mask, const crypto::Keypair& key,
                                 std::uint64_t round_seed, LedgerRow& row) {
  // 1. decrypt the arriving model if needed
  std::vector<double> flat;
  if (incoming.is_encrypted) {
    const auto t0 = Clock::now();
    flat = crypto::decrypt_masked(incoming, mask, key);
    row.dec_time_s += seconds_since(t0);
    row.dec_ops += 1;
  } else {
    if (incoming.plain.size() != state.params.flat.size()) {
      throw std::invalid_argument("client_round: incoming model length mismatch");
    }
    flat = incoming.plain;
  }
  state.params = params_from_flat(std::move(flat), state.params.layout);

  // 2. pick this round's dataset
  const auto& ds = is_auth ? state.dataset.authentic : state.dataset.synthetic;
  if (ds.empty()) {
    throw std::invalid_argument(is_auth ? "client_round: empty authentic dataset"
                                        : "client_round: empty synthetic dataset");
  }

  // 3. local training
  {
    const auto t0 = Clock::now();
    nn::TrainOptions opts{state.hp.local_epochs, state.hp.batch_size, state.hp.lr};
    state.params = nn::train_local(spec, state.params, ds, opts,
                                   derive_seed(round_seed, "local-train"));
    row.train_time_s += seconds_since(t0);
  }

  // 4. transmit: encrypted on authentic rounds, plaintext otherwise
  if (is_auth) {
    const auto t0 = Clock::now();
    auto msg = crypto::encrypt_masked(state.params, mask, key, derive_seed(round_seed, "enc"));
    row.enc_time_s += seconds_since(t0);
    row.enc_ops += 1;
    return msg;
  }
  return crypto::plain_model(state.params, mask);
}

crypto::MaskedModel server_aggregate(const std::vector<crypto::MaskedModel>& models,
                                     const std::vector<double>& weights,
                                     const crypto::EncryptionMask& mask, bool is_auth) {
  if (models.empty()) throw std::invalid_argument("server_aggregate: no models");
  if (models.size() != weights.size()) {
    throw std::invalid_argument("server_aggregate: weight count mismatch");
  }
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("server_aggregate: weights must sum to 1");
  }
  for (const auto& m : models) {
    if (m.is_encrypted != is_auth) {
      throw std::invalid_argument("server_aggregate: encryption status inconsistent with round");
    }
    if (!(m.mask == mask)) throw std::invalid_argument("server_aggregate: mask mismatch");
  }

  if (!is_auth) {
    crypto::MaskedModel out;
    out.mask = mask;
    out.is_encrypted = false;
    out.plain.assign(models[0].plain.size(), 0.0);
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i].plain.size() != out.plain.size()) {
        throw std::invalid_argument("server_aggregate: model length mismatch");
      }
      for (std::size_t j = 0; j < out.plain.size(); ++j) {
        out.plain[j] += weights[i] * models[i].plain[j];
      }
    }
    return out;
  }

  crypto::MaskedModel acc = crypto::zero_accumulator(models[0]);
  for (std::size_t i = 0; i < models.size(); ++i) {
    acc = crypto::add_weighted(acc, models[i], weights[i]);
  }
  return acc;
}

std::vector<double> dataset_weights(const std::vector<data::ClientDataset>& clients,
                                    bool authentic) {
  std::vector<double> w(clients.size());
  double total = 0.0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& ds = authentic ? clients[i].authentic : clients[i].synthetic;
    w[i] = static_cast<double>(ds.size());
    total += w[i];
  }
  if (total <= 0.0) throw std::invalid_argument("dataset_weights: no samples");
  for (auto& v : w) v /= total;
  // exact unit sum despite rounding
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  w.back() += 1.0 - sum;
  return w;
}

RunResult run_training(const RunConfig& config) {
  config.schedule.validate();
  if (config.clients.empty()) throw std::invalid_argument("run_training: no clients");
  if (config.test_set.empty()) throw std::invalid_argument("run_training: empty test set");
  if (config.max_rounds < 1) throw std::invalid_argument("run_training: max_rounds must be >= 1");
  if (config.eta < 0.0 || config.eta > 1.0) {
    throw std::invalid_argument("run_training: eta must be in [0,1]");
  }
  nn::validate_spec(config.spec);
  if (config.stop_rule) config.stop_rule->validate();

  const std::size_t n_clients = config.clients.size();
  const std::uint64_t master = config.master_seed;

  // setup: key, initial model, encryption mask
  const crypto::Keypair key = crypto::keygen(derive_seed(master, "keygen"), config.scheme);
  nn::ModelParams global = nn::init_params(config.spec, derive_seed(master, "model-init"));

  crypto::EncryptionMask mask;
  if (config.mask_from_sensitivity && config.eta > 0.0) {
    const auto sens = sensitivity_profile(config.spec, global, config.clients,
                                          config.hp.batch_size);
    mask = crypto::build_mask(config.eta, static_cast<std::int64_t>(global.flat.size()), &sens,
                              derive_seed(master, "mask"));
  } else {
    mask = crypto::build_mask(config.eta, static_cast<std::int64_t>(global.flat.size()), nullptr,
                              derive_seed(master, "mask"));
  }

  std::vector<ClientState> states;
  states.reserve(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    ClientState st;
    st.client_id = static_cast<int>(i);
    st.dataset = config.clients[i];
    st.params = global;
    st.hp = config.hp;
    states.push_back(std::move(st));
  }

  ServerState server;
  server.mask = mask;
  server.authentic_weights = dataset_weights(config.clients, true);
  server.synthetic_weights = dataset_weights(config.clients, false);
  server.global_model = crypto::plain_model(global, mask);

  RunResult result;
  result.mask = mask;
  result.client_lr = config.hp.lr;
  result.public_key = key.pub;

  std::vector<double> accuracy_series;
  std::vector<std::uint8_t> broadcast_bytes = crypto::serialize_masked(server.global_model);

  for (std::int64_t t = 0; t < config.max_rounds; ++t) {
    const bool is_auth = is_authentic_round(t, config.schedule);
    LedgerRow row;
    row.round = t;
    row.is_authentic = is_auth;

    const bool keep_trace =
        std::find(config.trace_rounds.begin(), config.trace_rounds.end(), t) !=
        config.trace_rounds.end();
    RoundTrace trace;
    if (keep_trace) {
      trace.round = t;
      trace.is_authentic = is_auth;
      trace.incoming_broadcast = broadcast_bytes;
      trace.model_in_plain = global.flat;  // w^{t-1} as the clients decrypt it
    }

    // client passes (independent; optionally threaded)
    std::vector<crypto::MaskedModel> uploads(n_clients);
    std::vector<LedgerRow> client_rows(n_clients);
    auto run_client = [&](std::size_t i) {
      client_rows[i].round = t;
      uploads[i] = client_round(config.spec, states[i], server.global_model, is_auth, mask, key,
                                derive_seed(master, "round-client",
                                            static_cast<std::uint64_t>(t) * n_clients + i),
                                client_rows[i]);
    };
    if (config.parallel_clients && n_clients > 1) {
      std::vector<std::thread> pool;
      pool.reserve(n_clients);
      for (std::size_t i = 0; i < n_clients; ++i) pool.emplace_back(run_client, i);
      for (auto& th : pool) th.join();
    } else {
      for (std::size_t i = 0; i < n_clients; ++i) run_client(i);
    }
    for (std::size_t i = 0; i < n_clients; ++i) {
      row.enc_ops += client_rows[i].enc_ops;
      row.dec_ops += client_rows[i].dec_ops;
      row.enc_time_s += client_rows[i].enc_time_s;
      row.dec_time_s += client_rows[i].dec_time_s;
      row.train_time_s += client_rows[i].train_time_s;
      const auto bytes = crypto::serialize_masked(uploads[i]);
      const std::int64_t cipher = crypto::serialized_cipher_bytes(uploads[i]);
      row.ciphertext_bytes_sent += cipher;
      row.plaintext_bytes_sent += static_cast<std::int64_t>(bytes.size()) - cipher;
      if (keep_trace) trace.client_uploads.push_back(bytes);
    }

    // aggregation barrier (fixed ascending-client order)
    {
      const auto t0 = Clock::now();
      server.global_model = server_aggregate(
          uploads, is_auth ? server.authentic_weights : server.synthetic_weights, mask, is_auth);
      row.agg_time_s = seconds_since(t0);
    }
    server.round = t;

    // broadcast: authentic-round aggregates stay encrypted on the wire
    broadcast_bytes = crypto::serialize_masked(server.global_model);
    const std::int64_t bc_cipher = crypto::serialized_cipher_bytes(server.global_model);
    row.broadcast_cipher_bytes = bc_cipher;
    row.broadcast_plain_bytes = static_cast<std::int64_t>(broadcast_bytes.size()) - bc_cipher;

    // measurement harness: evaluate the aggregate each round (not charged)
    std::vector<double> global_flat =
        server.global_model.is_encrypted
            ? crypto::decrypt_masked(server.global_model, mask, key)
            : server.global_model.plain;
    global = params_from_flat(std::move(global_flat), global.layout);
    const double acc = 100.0 * nn::evaluate_accuracy(config.spec, global, config.test_set);

    result.history.push_back({t, is_auth, acc});
    accuracy_series.push_back(acc);
    result.ledger.rows.push_back(row);
    if (keep_trace) result.traces.push_back(std::move(trace));
    if (std::find(config.snapshot_rounds.begin(), config.snapshot_rounds.end(), t) !=
        config.snapshot_rounds.end()) {
      result.snapshots.emplace(t, global);
    }

    if (config.stop_rule) {
      if (const auto hit = analysis::detect_convergence(accuracy_series, *config.stop_rule)) {
        result.converged_round = static_cast<std::int64_t>(*hit);
        break;
      }
    }
  }

  result.final_params = global;
  return result;
}

}  // namespace heintfl::fl
