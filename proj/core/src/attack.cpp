#include "heintfl/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "heintfl/rng.hpp"

namespace heintfl::attack {

namespace {

// Matching-loss evaluator: squared distance between the dummy gradient and
// the inferred gradient over the observable coordinates.
class MatchingLoss {
 public:
  MatchingLoss(const nn::ModelSpec& spec, nn::ModelParams model,
               const InferredGradient& target_grad, int num_classes)
      : spec_(spec), model_(std::move(model)), target_(target_grad), num_classes_(num_classes) {
    std::vector<int> bshape{1};
    bshape.insert(bshape.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    batch_shape_ = bshape;
  }

  double operator()(const std::vector<double>& pixels, const std::vector<double>& label_logits) {
    Tensor batch{batch_shape_, pixels};
    nn::ForwardCache cache;
    nn::forward(spec_, model_, batch, &cache);

    Tensor soft = nn::softmax(Tensor{{1, num_classes_}, label_logits});
    nn::Gradient grad;
    nn::backward_soft(spec_, model_, cache, soft, grad);

    double loss = 0.0;
    for (std::size_t j = 0; j < target_.known.size(); ++j) {
      if (!target_.known[j]) continue;
      const double d = grad.flat[j] - target_.values[j];
      loss += d * d;
    }
    return loss;
  }

  bool has_signal() const {
    return std::any_of(target_.known.begin(), target_.known.end(),
                       [](std::uint8_t k) { return k != 0; });
  }

 private:
  const nn::ModelSpec& spec_;
  nn::ModelParams model_;
  const InferredGradient& target_;
  int num_classes_;
  std::vector<int> batch_shape_;
};

}  // namespace

InferredGradient infer_gradient(const AttackTarget& target) {
  if (!(target.client_lr > 0.0)) {
    throw std::invalid_argument("infer_gradient: client learning rate unknown or zero");
  }
  if (target.observed_params.size() != target.previous_broadcast.size() ||
      target.observed_params.size() != target.observable.size()) {
    throw std::invalid_argument("infer_gradient: vector length mismatch");
  }
  InferredGradient out;
  out.values.assign(target.observed_params.size(), std::numeric_limits<double>::quiet_NaN());
  out.known.assign(target.observed_params.size(), 0);
  for (std::size_t j = 0; j < target.observable.size(); ++j) {
    if (!target.observable[j]) continue;
    out.values[j] = (target.previous_broadcast[j] - target.observed_params[j]) / target.client_lr;
    out.known[j] = 1;
  }
  return out;
}

AttackResult dlg_attack(const AttackTarget& target, const DlgOptions& opts, std::uint64_t seed,
                        const Tensor* reference) {
  nn::validate_spec(target.spec);
  const auto inferred = infer_gradient(target);

  // The attacker's model: broadcast values where visible, random draws where
  // the ciphertext hides them (encrypted slots look like noise).
  nn::ModelParams model;
  model.layout = nn::make_layout(target.spec);
  model.flat = target.previous_broadcast;
  Rng fill_rng(derive_seed(seed, "masked-fill"));
  for (std::size_t j = 0; j < model.flat.size(); ++j) {
    if (!target.observable[j]) model.flat[j] = fill_rng.uniform(-0.25, 0.25);
  }

  MatchingLoss loss_fn(target.spec, std::move(model), inferred, target.num_classes);

  const std::int64_t pixel_count = Tensor::element_count(target.spec.input_shape);
  std::vector<double> pixels(static_cast<std::size_t>(pixel_count));
  std::vector<double> logits(static_cast<std::size_t>(target.num_classes));
  Rng init_rng(derive_seed(seed, "dummy-init"));
  for (auto& p : pixels) p = init_rng.uniform();
  for (auto& z : logits) z = init_rng.gaussian() * 0.5;

  AttackResult result;
  result.recovered_image = Tensor{target.spec.input_shape, pixels};
  result.recovered_label_probs =
      nn::softmax(Tensor{{1, target.num_classes}, logits}).values;

  if (!loss_fn.has_signal()) {
    // fully masked target: the matching loss is empty and carries no signal
    result.matching_loss = 0.0;
    result.iterations_used = 0;
  } else {
    const std::size_t dim = pixels.size() + logits.size();
    std::vector<double> m1(dim, 0.0), m2(dim, 0.0), grad(dim, 0.0);
    double best_loss = loss_fn(pixels, logits);
    std::vector<double> best_pixels = pixels;
    std::vector<double> best_logits = logits;

    auto var_at = [&](std::size_t i) -> double& {
      return i < pixels.size() ? pixels[i] : logits[i - pixels.size()];
    };

    int it = 0;
    for (; it < opts.iterations; ++it) {
      for (std::size_t i = 0; i < dim; ++i) {
        double& v = var_at(i);
        const double keep = v;
        v = keep + opts.fd_epsilon;
        const double up = loss_fn(pixels, logits);
        v = keep - opts.fd_epsilon;
        const double down = loss_fn(pixels, logits);
        v = keep;
        grad[i] = (up - down) / (2.0 * opts.fd_epsilon);
      }

      if (opts.adaptive) {
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double t = it + 1;
        for (std::size_t i = 0; i < dim; ++i) {
          m1[i] = b1 * m1[i] + (1 - b1) * grad[i];
          m2[i] = b2 * m2[i] + (1 - b2) * grad[i] * grad[i];
          const double mhat = m1[i] / (1 - std::pow(b1, t));
          const double vhat = m2[i] / (1 - std::pow(b2, t));
          var_at(i) -= opts.step * mhat / (std::sqrt(vhat) + eps);
        }
      } else {
        for (std::size_t i = 0; i < dim; ++i) var_at(i) -= opts.step * grad[i];
      }
      for (auto& p : pixels) p = std::clamp(p, 0.0, 1.0);

      const double cur = loss_fn(pixels, logits);
      if (!std::isfinite(cur)) {
        result.diverged = true;
        break;
      }
      if (cur < best_loss) {
        best_loss = cur;
        best_pixels = pixels;
        best_logits = logits;
      }
    }
    result.iterations_used = it;
    result.matching_loss = best_loss;
    result.recovered_image = Tensor{target.spec.input_shape, best_pixels};
    result.recovered_label_probs =
        nn::softmax(Tensor{{1, target.num_classes}, best_logits}).values;
  }

  if (reference) {
    result.uqi_score = uqi(*reference, result.recovered_image);
    result.msssim_score = msssim(*reference, result.recovered_image);
    result.vif_score = vif(*reference, result.recovered_image);
  }
  return result;
}

namespace {

// Target construction shared by the sweep: simulate the victim's one-image,
// one-step update from the round's broadcast model.
struct VictimUpdate {
  AttackTarget target;
  const data::LabeledImage* image;
};

std::vector<double> one_step_update(const nn::ModelSpec& spec, const nn::ModelParams& base,
                                    const data::LabeledImage& img, double lr) {
  std::vector<int> bshape{1};
  bshape.insert(bshape.end(), spec.input_shape.begin(), spec.input_shape.end());
  Tensor batch{bshape, img.pixels.values};
  nn::ForwardCache cache;
  nn::forward(spec, base, batch, &cache);
  nn::Gradient grad;
  nn::backward(spec, base, cache, {img.label}, grad);
  std::vector<double> updated = base.flat;
  for (std::size_t i = 0; i < updated.size(); ++i) updated[i] -= lr * grad.flat[i];
  return updated;
}

}  // namespace

ScoreTable score_attack_sweep(const AttackRunArtifacts& artifacts,
                              const std::vector<std::int64_t>& round_ids,
                              const SweepOptions& opts) {
  ScoreTable table;
  if (round_ids.empty()) return table;
  const int num_classes = artifacts.spec.num_classes;

  // pool of all authentic images, the reference set for synthetic rounds
  std::vector<const data::LabeledImage*> authentic_pool;
  for (const auto& c : artifacts.clients) {
    for (const auto& img : c.authentic) authentic_pool.push_back(&img);
  }

  std::uint64_t attack_counter = 0;
  for (std::int64_t round : round_ids) {
    const fl::RoundTrace* trace = nullptr;
    for (const auto& t : artifacts.traces) {
      if (t.round == round) trace = &t;
    }
    if (!trace) {
      throw std::invalid_argument("score_attack_sweep: no trace for round " +
                                  std::to_string(round));
    }

    const auto incoming =
        crypto::deserialize_masked(trace->incoming_broadcast, artifacts.pk);

    // Broadcast model as the attacker sees it: plaintext coordinates only.
    // The victim itself trains from the true values; the simulator recovers
    // them from the plaintext coordinates plus (for masked ones) nothing --
    // masked coordinates stay hidden from the attacker on both legs.
    std::vector<double> broadcast_plain(artifacts.mask.bits.size(), 0.0);
    {
      std::size_t pi = 0;
      for (std::size_t j = 0; j < artifacts.mask.bits.size(); ++j) {
        if (incoming.is_encrypted) {
          if (!artifacts.mask.bits[j]) broadcast_plain[j] = incoming.plain[pi++];
        } else {
          broadcast_plain[j] = incoming.plain[j];
        }
      }
    }

    // Ground-truth model the clients trained from this round. For encrypted
    // broadcasts the simulator kept the plaintext alongside the trace.
    nn::ModelParams base;
    base.layout = nn::make_layout(artifacts.spec);
    base.flat = trace->model_in_plain;
    if (base.flat.size() != artifacts.mask.bits.size()) {
      throw std::invalid_argument("score_attack_sweep: trace model length mismatch");
    }

    // Observable coordinates: plaintext on both the upload and the broadcast.
    std::vector<std::uint8_t> observable(artifacts.mask.bits.size(), 1);
    const bool upload_encrypted = trace->is_authentic;
    for (std::size_t j = 0; j < observable.size(); ++j) {
      const bool hidden_up = upload_encrypted && artifacts.mask.bits[j];
      const bool hidden_down = incoming.is_encrypted && artifacts.mask.bits[j];
      observable[j] = (hidden_up || hidden_down) ? 0 : 1;
    }

    // Attack images: per class, round-robin over clients, from the dataset
    // side this round actually trained on.
    std::vector<const data::LabeledImage*> targets;
    for (int cls = 0; cls < num_classes; ++cls) {
      int taken = 0;
      std::size_t offset = 0;
      while (taken < opts.images_per_class) {
        bool any = false;
        for (const auto& client : artifacts.clients) {
          const auto& ds = trace->is_authentic ? client.authentic : client.synthetic;
          std::size_t seen = 0;
          for (const auto& img : ds) {
            if (img.label != cls) continue;
            if (seen++ == offset) {
              targets.push_back(&img);
              ++taken;
              any = true;
              break;
            }
          }
          if (taken >= opts.images_per_class) break;
        }
        if (!any) break;  // class exhausted across all clients
        ++offset;
      }
    }

    RoundScoreSummary summary;
    summary.round = round;
    summary.is_authentic = trace->is_authentic;
    summary.max_uqi = summary.max_msssim = summary.max_vif = 0.0;

    int image_id = 0;
    for (const auto* img : targets) {
      AttackTarget target;
      target.spec = artifacts.spec;
      target.previous_broadcast = broadcast_plain;
      target.observed_params = one_step_update(artifacts.spec, base, *img, artifacts.client_lr);
      target.observable = observable;
      target.client_lr = artifacts.client_lr;
      target.num_classes = num_classes;

      auto res = dlg_attack(target, opts.dlg,
                            derive_seed(opts.seed, "dlg-attack", attack_counter++), nullptr);

      AttackRow row;
      row.round = round;
      row.is_authentic = trace->is_authentic;
      row.image_id = image_id++;
      row.label = img->label;
      row.matching_loss = res.matching_loss;
      row.iterations = res.iterations_used;

      if (trace->is_authentic) {
        row.uqi = uqi(img->pixels, res.recovered_image);
        row.msssim = msssim(img->pixels, res.recovered_image);
        row.vif = vif(img->pixels, res.recovered_image);
      } else {
        // compare against every authentic image; keep the best MSSSIM match
        double best_ms = -2.0;
        const data::LabeledImage* best = nullptr;
        for (const auto* cand : authentic_pool) {
          const double ms = msssim(cand->pixels, res.recovered_image);
          if (ms > best_ms) {
            best_ms = ms;
            best = cand;
          }
        }
        if (!best) throw std::runtime_error("score_attack_sweep: empty authentic pool");
        row.msssim = best_ms;
        row.uqi = uqi(best->pixels, res.recovered_image);
        row.vif = vif(best->pixels, res.recovered_image);
      }

      summary.images += 1;
      summary.max_uqi = std::max(summary.max_uqi, row.uqi);
      summary.max_msssim = std::max(summary.max_msssim, row.msssim);
      summary.max_vif = std::max(summary.max_vif, row.vif);
      summary.avg_uqi += row.uqi;
      summary.avg_msssim += row.msssim;
      summary.avg_vif += row.vif;

      table.rows.push_back(row);
      table.recovered.push_back(res.recovered_image);
    }
    if (summary.images > 0) {
      summary.avg_uqi /= summary.images;
      summary.avg_msssim /= summary.images;
      summary.avg_vif /= summary.images;
    }
    table.per_round.push_back(summary);
  }
  return table;
}

void write_attack_csv(std::ostream& out, const ScoreTable& table) {
  out << "round,image_id,class,uqi,msssim,vif,matching_loss,iterations\n";
  char buf[256];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%d,%.10g,%.10g,%.10g,%.10g,%d\n",
                  static_cast<long long>(r.round), r.image_id, r.label, r.uqi, r.msssim, r.vif,
                  r.matching_loss, r.iterations);
    out << buf;
  }
}

void write_pnm(const std::string& path, const Tensor& image) {
  if (image.shape.size() != 3 || (image.shape[0] != 1 && image.shape[0] != 3)) {
    throw std::invalid_argument("write_pnm: expected (1,H,W) or (3,H,W) tensor");
  }
  const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pnm: cannot open " + path);
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ci = 0; ci < c; ++ci) {
        const double v = image.values[(static_cast<std::size_t>(ci) * h + y) * w + x];
        const int byte = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        out.put(static_cast<char>(byte));
      }
    }
  }
}

}  // namespace heintfl::attack
